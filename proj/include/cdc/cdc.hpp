#pragma once

#include "cdc/channel.hpp"
#include "cdc/estimators.hpp"
#include "cdc/objective.hpp"
#include "cdc/optimizer.hpp"
#include "cdc/parallel.hpp"
#include "cdc/particles.hpp"
#include "cdc/rng.hpp"
#include "cdc/sampling.hpp"
#include "cdc/types.hpp"
