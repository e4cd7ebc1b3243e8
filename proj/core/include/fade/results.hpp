#pragma once

// CSV and manifest emission. Numbers are printed at a fixed precision so that
// reruns from a manifest reproduce files byte for byte.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "fade/config.hpp"
#include "fade/darts_train.hpp"
#include "fade/outer_search.hpp"

namespace fade::results {

std::string library_version();

std::string fmt(double v);

// Line-buffered CSV file; every appended row is flushed immediately so an
// interrupted run leaves only complete rows behind.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& file, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::size_t columns_;
  std::ofstream out_;
  std::mutex mutex_;
};

// outer_epoch,epoch,phase,loss,r,alpha  (r and alpha are ';'-joined, alpha row-major)
std::vector<std::string> training_log_header();
std::vector<std::string> training_log_row(std::size_t outer_epoch, const train::TrainLogRow& row);

// outer_epoch,cell,dim0,dim1,dim2
std::vector<std::string> trajectory_header();
std::vector<std::vector<std::string>> trajectory_rows(const search::EpochRecord& record);

// outer_epoch,cell,member,src0,src1,src2,dag,beta
std::vector<std::string> proposal_header();
std::vector<std::vector<std::string>> proposal_rows(const search::EpochRecord& record);

// epoch,method,c{i}_dim{k}...,median_accuracy,accuracies
std::vector<std::string> history_header(std::size_t depth);
std::vector<std::string> history_row(std::size_t epoch, const std::string& method,
                                     const std::vector<graph::FeaturePoint>& points,
                                     const search::Evaluation& evaluation);

std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now());

struct RunManifest {
  std::string command;
  std::string version;
  ExperimentConfig config;
  std::vector<std::uint64_t> seeds;
  std::string started;
  std::string finished;
  std::string status = "complete";  // complete | interrupted | failed
  std::vector<std::string> artifacts;
  std::vector<std::pair<std::string, std::string>> extra;

  std::string to_json() const;
  void write(const std::filesystem::path& file) const;
};

}  // namespace fade::results
