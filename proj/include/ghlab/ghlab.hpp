#pragma once

// Everything: geometry, grids, norms, operators, linear algebra, experiments, I/O and the acceptance suite.
#include "ghlab/suite.hpp"
