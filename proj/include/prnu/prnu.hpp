#pragma once

// Umbrella header.

#include "prnu/codec_sim.hpp"
#include "prnu/eval.hpp"
#include "prnu/fingerprint.hpp"
#include "prnu/h264/masks.hpp"
#include "prnu/h264/mp4.hpp"
#include "prnu/h264/trace.hpp"
#include "prnu/matcher.hpp"
#include "prnu/noise.hpp"
#include "prnu/pipeline.hpp"
#include "prnu/synth.hpp"
#include "prnu/y4m.hpp"
