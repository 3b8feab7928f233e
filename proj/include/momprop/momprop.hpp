#pragma once

#include "errors.hpp"
#include "specfun.hpp"
#include "moments.hpp"
#include "fit.hpp"
#include "linear.hpp"
#include "mvn.hpp"
#include "probit.hpp"
#include "diagnostics.hpp"
