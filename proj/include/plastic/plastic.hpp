#ifndef PLASTIC_PLASTIC_HPP
#define PLASTIC_PLASTIC_HPP

// Umbrella header: a small CNN/CAE library with manual backpropagation and
// an experiment harness for comparing representation-adaptation strategies
// (RESET, RESET_PRF, REUSE_ALL, REUSE_CF) across source->target domain
// switches.

#include "plastic/activations.hpp"
#include "plastic/checkpoint.hpp"
#include "plastic/data.hpp"
#include "plastic/errors.hpp"
#include "plastic/harness.hpp"
#include "plastic/layers.hpp"
#include "plastic/losses.hpp"
#include "plastic/model.hpp"
#include "plastic/optim.hpp"
#include "plastic/rng.hpp"
#include "plastic/serialize.hpp"
#include "plastic/strategies.hpp"
#include "plastic/synthetic.hpp"
#include "plastic/tensor.hpp"

#endif  // PLASTIC_PLASTIC_HPP
