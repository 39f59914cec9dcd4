#pragma once

#include <string>

#include "relcot/model.hpp"

namespace relcot::nn {

/// Binary checkpoint layout: an 8-byte magic, a format version, a JSON
/// header describing the payload, then the raw tensor data as little-endian
/// doubles in header order. Writing the same state twice produces identical
/// bytes; there are no timestamps or host-specific fields.

/// Writes the full model: config, frozen weights, and any adapters.
void save_model(const ToyTransformer& model, const std::string& path);
ToyTransformer load_model(const std::string& path);

/// Writes only the adapter tensors (A, B per adapted projection) plus the
/// adapter hyperparameters and the config of the model they came from.
void save_adapters(const ToyTransformer& model, const std::string& path);

/// Restores adapters into `model`. Projections named in the checkpoint must
/// exist; ones without an adapter get one injected with the stored shapes,
/// ones already adapted are shape-checked and overwritten. Throws when the
/// stored config does not match the model's.
void load_adapters(ToyTransformer& model, const std::string& path);

}  // namespace relcot::nn
