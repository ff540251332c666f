// Umbrella header.

#pragma once

#include "spinosc/classical.hpp"
#include "spinosc/config.hpp"
#include "spinosc/csv.hpp"
#include "spinosc/cumulant.hpp"
#include "spinosc/diagnostics.hpp"
#include "spinosc/ensemble.hpp"
#include "spinosc/errors.hpp"
#include "spinosc/hilbert.hpp"
#include "spinosc/noise.hpp"
#include "spinosc/params.hpp"
#include "spinosc/propagator.hpp"
#include "spinosc/runner.hpp"
#include "spinosc/sse.hpp"
#include "spinosc/svg.hpp"
