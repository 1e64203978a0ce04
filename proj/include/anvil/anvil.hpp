#pragma once

#include "anvil/codegen.hpp"
#include "anvil/decomp.hpp"
#include "anvil/exec.hpp"
#include "anvil/index_expr.hpp"
#include "anvil/matrix.hpp"
#include "anvil/program.hpp"
#include "anvil/script.hpp"
#include "anvil/sim.hpp"
#include "anvil/types.hpp"
