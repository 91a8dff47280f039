#pragma once

// Umbrella header for the whole library.

#include "dtour/bench.hpp"
#include "dtour/dataio.hpp"
#include "dtour/dataset.hpp"
#include "dtour/engine.hpp"
#include "dtour/error.hpp"
#include "dtour/geometry.hpp"
#include "dtour/manual.hpp"
#include "dtour/protocol.hpp"
#include "dtour/service.hpp"
#include "dtour/spectral.hpp"
#include "dtour/strategies.hpp"
#include "dtour/tourfile.hpp"
#include "dtour/tourpath.hpp"
