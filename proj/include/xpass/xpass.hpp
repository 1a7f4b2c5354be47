#pragma once

#include "xpass/attention.hpp"
#include "xpass/compute/adam.hpp"
#include "xpass/compute/ops.hpp"
#include "xpass/compute/tensor.hpp"
#include "xpass/data/dataset.hpp"
#include "xpass/data/ingest.hpp"
#include "xpass/data/metrica.hpp"
#include "xpass/data/synth.hpp"
#include "xpass/data/window.hpp"
#include "xpass/error.hpp"
#include "xpass/harness/counterfactual.hpp"
#include "xpass/harness/metrics.hpp"
#include "xpass/harness/train.hpp"
#include "xpass/model/checkpoint.hpp"
#include "xpass/model/network.hpp"
#include "xpass/pitch_zones.hpp"
