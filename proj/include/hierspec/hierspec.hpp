#pragma once

#include "errors.hpp"
#include "hierarchy.hpp"
#include "laplacian.hpp"
#include "oracle.hpp"
#include "perturb.hpp"
#include "resolvent.hpp"
#include "root_finding.hpp"
#include "sparse_random.hpp"
#include "statistics.hpp"
