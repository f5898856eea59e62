#pragma once

#include "odis/core.hpp"
#include "odis/forward.hpp"
#include "odis/noise.hpp"
#include "odis/fft.hpp"
#include "odis/linalg.hpp"
#include "odis/recon.hpp"
#include "odis/metrics.hpp"
#include "odis/io.hpp"
#include "odis/simulation.hpp"
#include "odis/benchmark.hpp"
