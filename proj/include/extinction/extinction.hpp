#pragma once

#include "extinction/errors.hpp"
#include "extinction/spectral.hpp"
#include "extinction/nonlinearity.hpp"
#include "extinction/noise.hpp"
#include "extinction/bounds.hpp"
#include "extinction/sde.hpp"
#include "extinction/config.hpp"
#include "extinction/report.hpp"
