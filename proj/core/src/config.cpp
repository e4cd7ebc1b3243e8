#include "fade/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <variant>

#include <json.hpp>

#include "fade/error.hpp"

namespace fade {
namespace {

using C = ExperimentConfig;
// seed (uint64_t) shares the size_t alternative on LP64 targets.
static_assert(std::is_same_v<std::uint64_t, std::size_t>);
using Member = std::variant<std::size_t C::*, int C::*, double C::*, bool C::*,
                            std::string C::*, std::vector<int> C::*, std::vector<double> C::*>;

struct Field {
  const char* name;
  Member member;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"seed", &C::seed},
      {"seeds", &C::seeds},
      {"dataset", &C::dataset},
      {"data_root", &C::data_root},
      {"cifar_classes", &C::cifar_classes},
      {"cifar_limit", &C::cifar_limit},
      {"downsample", &C::downsample},
      {"samples", &C::samples},
      {"image_side", &C::image_side},
      {"image_height", &C::image_height},
      {"noise", &C::noise},
      {"split", &C::split},
      {"max_vertices", &C::max_vertices},
      {"bins", &C::bins},
      {"depth", &C::depth},
      {"width", &C::width},
      {"rows", &C::rows},
      {"channels", &C::channels},
      {"temperature", &C::temperature},
      {"alpha_init_std", &C::alpha_init_std},
      {"batch_size", &C::batch_size},
      {"lr", &C::lr},
      {"beta1", &C::beta1},
      {"beta2", &C::beta2},
      {"eps", &C::eps},
      {"weight_decay", &C::weight_decay},
      {"alpha_lr", &C::alpha_lr},
      {"clip", &C::clip},
      {"hyper_epochs", &C::hyper_epochs},
      {"discrete_epochs", &C::discrete_epochs},
      {"weight_batches", &C::weight_batches},
      {"arch_batches", &C::arch_batches},
      {"alpha_average_last", &C::alpha_average_last},
      {"reg_mode", &C::reg_mode},
      {"r_start", &C::r_start},
      {"r_end", &C::r_end},
      {"validation_paths", &C::validation_paths},
      {"outer_epochs", &C::outer_epochs},
      {"inner_epochs", &C::inner_epochs},
      {"gamma", &C::gamma},
      {"lambda", &C::lambda},
      {"sign", &C::sign},
      {"carry_weights", &C::carry_weights},
      {"eval_every", &C::eval_every},
      {"eval_repeats", &C::eval_repeats},
      {"oracle_temperature", &C::oracle_temperature},
      {"oracle_optimum", &C::oracle_optimum},
      {"budget", &C::budget},
      {"gp_length_scale", &C::gp_length_scale},
      {"gp_signal_variance", &C::gp_signal_variance},
      {"gp_noise", &C::gp_noise},
      {"gp_fit_length_scale", &C::gp_fit_length_scale},
      {"kappa", &C::kappa},
      {"xi", &C::xi},
      {"lattice", &C::lattice},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad value for '" + key + "': '" + v + "'");
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  return out;
}

std::string format_double(double d) {
  std::ostringstream os;
  os << std::setprecision(17) << d;
  return os.str();
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>)
      out += format_double(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  for (const auto& f : fields()) {
    if (key != f.name) continue;
    std::visit(
        [&](auto member) {
          using T = std::remove_reference_t<decltype(this->*member)>;
          if constexpr (std::is_same_v<T, std::string>)
            this->*member = value;
          else if constexpr (std::is_same_v<T, bool>) {
            if (value == "true" || value == "1")
              this->*member = true;
            else if (value == "false" || value == "0")
              this->*member = false;
            else
              throw ConfigError("bad value for '" + key + "': '" + value + "' (expected true/false)");
          } else if constexpr (std::is_same_v<T, std::vector<int>>)
            this->*member = parse_list<int>(key, value);
          else if constexpr (std::is_same_v<T, std::vector<double>>)
            this->*member = parse_list<double>(key, value);
          else {
            if constexpr (std::is_unsigned_v<T>)
              if (!value.empty() && value[0] == '-') throw ConfigError("'" + key + "' must be non-negative");
            this->*member = parse_number<T>(key, value);
          }
        },
        f.member);
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> ExperimentConfig::entries() const {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) {
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(this->*member)>;
          const auto& v = this->*member;
          if constexpr (std::is_same_v<T, std::string>)
            out[f.name] = v;
          else if constexpr (std::is_same_v<T, bool>)
            out[f.name] = v ? "true" : "false";
          else if constexpr (std::is_same_v<T, std::vector<int>> || std::is_same_v<T, std::vector<double>>)
            out[f.name] = join(v);
          else if constexpr (std::is_same_v<T, double>)
            out[f.name] = format_double(v);
          else
            out[f.name] = std::to_string(v);
        },
        f.member);
  }
  return out;
}

std::vector<std::string> ExperimentConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.name);
  return out;
}

std::string ExperimentConfig::to_text() const {
  const auto e = entries();
  std::string out;
  for (const auto& f : fields()) out += std::string(f.name) + " = " + e.at(f.name) + "\n";
  return out;
}

std::string ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  const auto e = entries();
  for (const auto& f : fields()) j[f.name] = e.at(f.name);
  return j.dump(2);
}

void ExperimentConfig::validate() const {
  require(seeds >= 1, "seeds must be >= 1");
  require(dataset == "planted" || dataset == "xor" || dataset == "cifar10",
          "dataset must be planted, xor or cifar10");
  for (int c : cifar_classes) require(c >= 0 && c < 10, "cifar_classes entries must be in [0, 10)");
  require(downsample >= 1 && 32 % downsample == 0, "downsample must divide 32");
  require(image_side >= 4, "image_side must be >= 4");
  require(image_height >= 1, "image_height must be >= 1");
  require(noise >= 0.0, "noise must be >= 0");
  require(split.size() == 3, "split needs three ratios");
  for (int r : split) require(r > 0, "split ratios must be positive");
  require(max_vertices >= 1 && max_vertices <= 6, "max_vertices must be in [1, 6]");
  require(bins >= 1, "bins must be >= 1");
  require(depth >= 1, "depth must be >= 1");
  require(width >= 1, "width must be >= 1");
  require(rows == "auto" || rows == "planted" || rows == "grid", "rows must be auto, planted or grid");
  require(rows != "planted" || dataset == "planted", "rows = planted needs dataset = planted");
  require(dataset != "planted" || rows == "grid" || width <= 5, "planted rows support width <= 5");
  require(channels >= 1, "channels must be >= 1");
  require(temperature > 0.0, "temperature must be > 0");
  require(alpha_init_std >= 0.0, "alpha_init_std must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(lr > 0.0, "lr must be > 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must be in [0, 1)");
  require(eps > 0.0, "eps must be > 0");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(alpha_lr >= 0.0, "alpha_lr must be >= 0");
  require(clip > 0.0, "clip must be > 0");
  require(hyper_epochs >= 1 && discrete_epochs >= 1, "epoch counts must be >= 1");
  require(alpha_average_last >= 1, "alpha_average_last must be >= 1");
  require(reg_mode == "independent" || reg_mode == "dependent", "reg_mode must be independent or dependent");
  if (reg_mode == "dependent")
    require((r_start > 0.0 && r_end <= 0.0) || (r_start == 0.0 && r_end == 0.0),
            "dependent reg_mode needs r_start > 0 >= r_end");
  require(outer_epochs >= 1 && inner_epochs >= 1, "outer_epochs and inner_epochs must be >= 1");
  require(gamma > 0.0, "gamma must be > 0");
  require(lambda > 0.0, "lambda must be > 0");
  require(sign == "ascent" || sign == "descent", "sign must be ascent or descent");
  require(eval_repeats >= 1, "eval_repeats must be >= 1");
  require(oracle_temperature > 0.0, "oracle_temperature must be > 0");
  require(oracle_optimum.size() == 3, "oracle_optimum needs three coordinates");
  require(budget >= 1, "budget must be >= 1");
  require(gp_length_scale > 0.0 && gp_signal_variance > 0.0 && gp_noise >= 0.0,
          "GP hyperparameters must be positive");
  require(lattice >= 1, "lattice must be >= 1");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

}  // namespace fade
