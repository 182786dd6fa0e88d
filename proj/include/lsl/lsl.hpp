#pragma once

#include "data_model.hpp"
#include "lsl_core.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "probe.hpp"
#include "reporting.hpp"
#include "synth.hpp"
#include "trainer.hpp"
