#include "fade/results.hpp"

#include <cstdio>
#include <ctime>

#include <json.hpp>

#include "fade/error.hpp"

namespace fade::results {
namespace {

std::string join(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ";" : "") + fmt(xs[i]);
  return out;
}

}  // namespace

std::string library_version() {
#ifdef FADE_VERSION
  return FADE_VERSION;
#else
  return "unknown";
#endif
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& file, const std::vector<std::string>& header)
    : path_(file), columns_(header.size()) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  out_.open(file, std::ios::out | std::ios::trunc);
  if (!out_) throw Error("cannot write " + file.string());
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_)
    throw ShapeError(path_.string() + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                     std::to_string(columns_));
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
  out_ << '\n';
  out_.flush();
}

std::vector<std::string> training_log_header() { return {"outer_epoch", "epoch", "phase", "loss", "r", "alpha"}; }

std::vector<std::string> training_log_row(std::size_t outer_epoch, const train::TrainLogRow& row) {
  std::vector<double> flat;
  for (const auto& r : row.alpha) flat.insert(flat.end(), r.begin(), r.end());
  return {std::to_string(outer_epoch), std::to_string(row.epoch + 1), row.phase, fmt(row.loss), join(row.r),
          join(flat)};
}

std::vector<std::string> trajectory_header() { return {"outer_epoch", "cell", "dim0", "dim1", "dim2"}; }

std::vector<std::vector<std::string>> trajectory_rows(const search::EpochRecord& record) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < record.anchors.size(); ++i) {
    const auto& a = record.anchors[i];
    rows.push_back({std::to_string(record.outer_epoch), std::to_string(i), fmt(a[0]), fmt(a[1]), fmt(a[2])});
  }
  return rows;
}

std::vector<std::string> proposal_header() {
  return {"outer_epoch", "cell", "member", "src0", "src1", "src2", "dag", "beta"};
}

std::vector<std::vector<std::string>> proposal_rows(const search::EpochRecord& record) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < record.rows.size(); ++i) {
    const auto& row = record.rows[i];
    for (std::size_t k = 0; k < row.members.size(); ++k) {
      const auto& s = row.sources[k];
      rows.push_back({std::to_string(record.outer_epoch), std::to_string(i), std::to_string(k), fmt(s[0]),
                      fmt(s[1]), fmt(s[2]), "\"" + row.members[k].to_string() + "\"", fmt(record.beta[i][k])});
    }
  }
  return rows;
}

std::vector<std::string> history_header(std::size_t depth) {
  std::vector<std::string> h{"epoch", "method"};
  for (std::size_t i = 0; i < depth; ++i)
    for (std::size_t k = 0; k < graph::kFeatureDims; ++k) h.push_back("c" + std::to_string(i) + "_dim" + std::to_string(k));
  h.push_back("median_accuracy");
  h.push_back("accuracies");
  return h;
}

std::vector<std::string> history_row(std::size_t epoch, const std::string& method,
                                     const std::vector<graph::FeaturePoint>& points,
                                     const search::Evaluation& evaluation) {
  std::vector<std::string> r{std::to_string(epoch), method};
  for (const auto& p : points)
    for (std::size_t k = 0; k < graph::kFeatureDims; ++k) r.push_back(fmt(p[k]));
  r.push_back(fmt(evaluation.median));
  r.push_back(join(evaluation.values));
  return r;
}

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["version"] = version;
  j["status"] = status;
  j["started"] = started;
  j["finished"] = finished;
  j["seeds"] = seeds;
  j["config"] = nlohmann::ordered_json::parse(config.to_json());
  j["artifacts"] = artifacts;
  for (const auto& [k, v] : extra) j["notes"][k] = v;
  return j.dump(2);
}

void RunManifest::write(const std::filesystem::path& file) const {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << to_json() << '\n';
}

}  // namespace fade::results
