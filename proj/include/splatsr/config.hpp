#pragma once

#include "splatsr/synth.hpp"
#include "splatsr/trainer.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace splatsr {

// Single JSON config document; CLI flags override keys by dotted path
// ("train.seed=7"). Unknown keys are rejected to catch typos.
struct AppConfig {
  nlohmann::json doc;

  static AppConfig defaults();
  static AppConfig from_file(const std::string& path);
  void apply_override(const std::string& dotted_assignment);

  TrainConfig train_config() const;
  RenderConfig render_config() const;
  SynthSceneSpec synth_spec() const;
};

}  // namespace splatsr
