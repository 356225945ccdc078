#pragma once

#include "drvcg/common.hpp"
#include "drvcg/contracts.hpp"
#include "drvcg/agents.hpp"
#include "drvcg/allocation.hpp"
#include "drvcg/reliability.hpp"
#include "drvcg/mechanisms.hpp"
#include "drvcg/simulate.hpp"
