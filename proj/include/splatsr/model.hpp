#pragma once

#include "splatsr/decoders.hpp"
#include "splatsr/feature_field.hpp"
#include "splatsr/scene_model.hpp"

#include <map>
#include <string>
#include <vector>

namespace splatsr {

// Full trainable scene state: anchors, latent feature field, decoders.
struct Model {
  FeatureField field;
  DecoderSet decoders;
  std::vector<Anchor> anchors;
  int k = 5;
  float sigma_init = 1e-4f;

  int anchor_count() const { return static_cast<int>(anchors.size()); }
};

// Optimizer state blob ("SGSO"), opaque to the model but persisted with it.
struct OptimizerStateBlob {
  uint64_t step_count = 0;
  // group name -> (m, v) first/second moment vectors
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;

  std::vector<uint8_t> serialize() const;
  static OptimizerStateBlob deserialize(const uint8_t* bytes, size_t n);
};

// Checkpoint container: "SGSC" magic, u32 version, u32 manifest length, JSON
// manifest, then the raw SGSA/SGSF/SGSW/SGSO sections back to back.
struct Checkpoint {
  Model model;
  OptimizerStateBlob optimizer;
  std::string stage = "coarse";
  int64_t iteration = 0;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace splatsr
