// Umbrella header.

#pragma once

#include "nsnmf/baselines.hpp"
#include "nsnmf/common.hpp"
#include "nsnmf/csv.hpp"
#include "nsnmf/evaluation.hpp"
#include "nsnmf/graph.hpp"
#include "nsnmf/model.hpp"
#include "nsnmf/offline.hpp"
#include "nsnmf/online.hpp"
