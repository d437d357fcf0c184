#pragma once

// Everything at once.

#include "clusterlearn/error.hpp"
#include "clusterlearn/model.hpp"
#include "clusterlearn/dp_segment.hpp"
#include "clusterlearn/bcd.hpp"
#include "clusterlearn/mip.hpp"
#include "clusterlearn/enumerative.hpp"
#include "clusterlearn/row_generation.hpp"
#include "clusterlearn/data_gen.hpp"
#include "clusterlearn/metrics.hpp"
#include "clusterlearn/io.hpp"
#include "clusterlearn/bench.hpp"
