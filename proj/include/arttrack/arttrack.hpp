#pragma once

#include "arttrack/bench.hpp"
#include "arttrack/canon.hpp"
#include "arttrack/cloud.hpp"
#include "arttrack/error.hpp"
#include "arttrack/kdtree.hpp"
#include "arttrack/kinopt.hpp"
#include "arttrack/metrics.hpp"
#include "arttrack/model.hpp"
#include "arttrack/part_frame.hpp"
#include "arttrack/ppf.hpp"
#include "arttrack/predictor.hpp"
#include "arttrack/se3.hpp"
#include "arttrack/synth.hpp"
#include "arttrack/tracker.hpp"
#include "arttrack/voting.hpp"
