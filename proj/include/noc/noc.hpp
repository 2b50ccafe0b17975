#pragma once

#include "noc/checkpoint.hpp"
#include "noc/commands.hpp"
#include "noc/config.hpp"
#include "noc/core_math.hpp"
#include "noc/environments.hpp"
#include "noc/errors.hpp"
#include "noc/io.hpp"
#include "noc/mlp.hpp"
#include "noc/model.hpp"
#include "noc/odeint.hpp"
#include "noc/optimizer.hpp"
#include "noc/oracle.hpp"
#include "noc/rng.hpp"
#include "noc/trainer.hpp"
#include "noc/vector_field.hpp"
