#pragma once

// Internals shared between the model math and checkpoint serialization.

#include "pixeldoc/model.hpp"

namespace pixeldoc::detail {

// All tensors of a model in their canonical order, zero-filled.
Parameters parameter_shapes(const ModelConfig& config);

// Rejects parameter sets whose tensor names/shapes do not match `config`.
void validate_params_structure(const ModelConfig& config, const Parameters& params);

}  // namespace pixeldoc::detail
