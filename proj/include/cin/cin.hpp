#pragma once

#include "cin/capability.hpp"
#include "cin/dump.hpp"
#include "cin/e2e.hpp"
#include "cin/eval.hpp"
#include "cin/gridworld.hpp"
#include "cin/hyperparams.hpp"
#include "cin/oracle.hpp"
#include "cin/parallel.hpp"
#include "cin/planner.hpp"
