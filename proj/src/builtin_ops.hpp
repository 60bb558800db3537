#pragma once

#include "adaqat/autodiff.hpp"

namespace adaqat::detail {

void register_tensor_ops(OpRegistry& registry);
void register_quant_ops(OpRegistry& registry);
void register_layer_ops(OpRegistry& registry);

}  // namespace adaqat::detail
