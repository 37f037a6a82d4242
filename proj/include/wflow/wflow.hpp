#ifndef WFLOW_WFLOW_HPP
#define WFLOW_WFLOW_HPP

#include "wflow/bregman.hpp"
#include "wflow/bures.hpp"
#include "wflow/diagnostics.hpp"
#include "wflow/error.hpp"
#include "wflow/functionals.hpp"
#include "wflow/io.hpp"
#include "wflow/kernels.hpp"
#include "wflow/measures.hpp"
#include "wflow/ot1d.hpp"
#include "wflow/potentials.hpp"
#include "wflow/preconditioners.hpp"
#include "wflow/schemes.hpp"

#endif  // WFLOW_WFLOW_HPP
