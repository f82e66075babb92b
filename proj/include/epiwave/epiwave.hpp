#pragma once

#define EPIWAVE_VERSION "0.1.0"

#include "error.hpp"
#include "numerics.hpp"
#include "rates.hpp"
#include "kernel.hpp"
#include "grid.hpp"
#include "dispersion.hpp"
#include "stationary.hpp"
#include "volterra.hpp"
#include "waves.hpp"
#include "spread.hpp"
#include "io.hpp"
#include "config.hpp"
