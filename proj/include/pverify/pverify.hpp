#pragma once

#include "pverify/bounds.hpp"
#include "pverify/config.hpp"
#include "pverify/envmodel.hpp"
#include "pverify/errors.hpp"
#include "pverify/geometry.hpp"
#include "pverify/imdp.hpp"
#include "pverify/linprog.hpp"
#include "pverify/neural.hpp"
#include "pverify/oracle.hpp"
#include "pverify/parallel.hpp"
#include "pverify/plot.hpp"
#include "pverify/random.hpp"
#include "pverify/refine.hpp"
#include "pverify/tolerances.hpp"
#include "pverify/cli.hpp"
