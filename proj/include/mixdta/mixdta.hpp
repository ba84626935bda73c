#pragma once

#include "mixdta/common.hpp"
#include "mixdta/csv.hpp"
#include "mixdta/network.hpp"
#include "mixdta/demand.hpp"
#include "mixdta/costs.hpp"
#include "mixdta/routing.hpp"
#include "mixdta/choice.hpp"
#include "mixdta/mesosim.hpp"
#include "mixdta/dta.hpp"
#include "mixdta/scenario.hpp"
