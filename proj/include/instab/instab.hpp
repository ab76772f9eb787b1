#pragma once

#include "instab/controls.hpp"
#include "instab/error.hpp"
#include "instab/metrics.hpp"
#include "instab/oracle.hpp"
#include "instab/pipeline.hpp"
#include "instab/report_io.hpp"
#include "instab/rng.hpp"
#include "instab/signal.hpp"
#include "instab/synth.hpp"
#include "instab/theory.hpp"
#include "instab/timing.hpp"
#include "instab/trace_io.hpp"
#include "instab/trace_model.hpp"
