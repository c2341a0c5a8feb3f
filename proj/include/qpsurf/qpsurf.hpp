#pragma once

#include "qpsurf/error.hpp"
#include "qpsurf/strip_domain.hpp"
#include "qpsurf/grid.hpp"
#include "qpsurf/maximal_solver.hpp"
#include "qpsurf/conjugation.hpp"
#include "qpsurf/period_engine.hpp"
#include "qpsurf/period_solver.hpp"
#include "qpsurf/surface_builder.hpp"
#include "qpsurf/sequences.hpp"
#include "qpsurf/diagnostics.hpp"
#include "qpsurf/config.hpp"
#include "qpsurf/pipeline.hpp"
