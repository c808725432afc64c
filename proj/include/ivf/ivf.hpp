#pragma once

#include "ivf/errors.hpp"
#include "ivf/special.hpp"
#include "ivf/tabulate.hpp"
#include "ivf/ineq_core.hpp"
#include "ivf/tests2x2.hpp"
#include "ivf/gail_simon.hpp"
#include "ivf/falsify.hpp"
#include "ivf/simlab.hpp"
#include "ivf/io.hpp"
