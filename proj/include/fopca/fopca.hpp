#ifndef FOPCA_FOPCA_HPP_
#define FOPCA_FOPCA_HPP_

#include "fopca/error.hpp"
#include "fopca/linalg.hpp"
#include "fopca/panel.hpp"
#include "fopca/pca.hpp"
#include "fopca/mp_law.hpp"
#include "fopca/random.hpp"
#include "fopca/diagnostics.hpp"
#include "fopca/inference.hpp"
#include "fopca/montecarlo.hpp"
#include "fopca/io.hpp"

#endif  // FOPCA_FOPCA_HPP_
