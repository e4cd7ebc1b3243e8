#pragma once

// Flat "key = value" experiment configuration. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fade {

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t seeds = 1;  // consecutive seeds for multi-seed commands

  // data
  std::string dataset = "planted";  // planted | xor | cifar10
  std::string data_root;            // cifar10 directory; falls back to FADE_DATA_ROOT
  std::vector<int> cifar_classes;   // empty keeps all ten
  std::size_t cifar_limit = 0;      // 0 keeps every sample
  std::size_t downsample = 4;
  std::size_t samples = 600;
  std::size_t image_side = 8;    // image width (and height for xor)
  std::size_t image_height = 8;  // planted task only
  double noise = 0.3;
  std::vector<int> split = {1, 1, 4};

  // graph space
  int max_vertices = 5;
  std::size_t bins = 8;

  // hyper-architecture
  std::size_t depth = 2;
  std::size_t width = 3;
  std::string rows = "auto";  // auto | planted | grid
  std::size_t channels = 8;   // deepest row
  double temperature = 10.0;
  double alpha_init_std = 0.5;

  // training
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.1;
  double beta2 = 1e-3;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double alpha_lr = 0.01;
  double clip = 10.0;
  std::size_t hyper_epochs = 10;
  std::size_t discrete_epochs = 10;
  std::size_t weight_batches = 0;
  std::size_t arch_batches = 0;
  std::size_t alpha_average_last = 1;
  std::string reg_mode = "independent";  // independent | dependent
  double r_start = 0.0;
  double r_end = 0.0;
  std::string validation_paths = "all";  // all | "0-1,2-0,..."

  // outer search
  std::size_t outer_epochs = 10;
  std::size_t inner_epochs = 5;
  double gamma = 0.125;
  double lambda = 0.25;
  std::string sign = "ascent";  // ascent | descent
  bool carry_weights = true;
  std::size_t eval_every = 5;
  std::size_t eval_repeats = 5;
  double oracle_temperature = 0.05;
  std::vector<double> oracle_optimum = {0.5, 0.5, 0.5};

  // baselines
  std::size_t budget = 50;
  double gp_length_scale = 0.2;
  double gp_signal_variance = 1.0;
  double gp_noise = 1e-3;
  bool gp_fit_length_scale = true;
  double kappa = 2.5;
  double xi = 0.0;
  std::size_t lattice = 9;

  // Applies one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  // Checks cross-field preconditions of every module.
  void validate() const;

  std::map<std::string, std::string> entries() const;
  std::string to_text() const;
  std::string to_json() const;

  static std::vector<std::string> keys();
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& file);

}  // namespace fade
