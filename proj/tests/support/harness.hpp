#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "deepreport/pipeline.hpp"
#include "local_web.hpp"
#include "offline_model.hpp"

namespace deepreport::testkit {

std::filesystem::path fixture_dir();
/// Committed replay corpus: snapshot/ plus transcripts.ndjson.
std::filesystem::path replay_dir();
std::filesystem::path dataset_path();
std::filesystem::path pages_path();

/// The fixed instant every fixture run uses.
Timestamp fixture_time();

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

struct Harness {
  /// Every dial of the run passes through here.
  std::shared_ptr<CountingTransport> transport;
  std::shared_ptr<LocalWeb> web;         // record and offline modes
  std::shared_ptr<OfflineModel> model;   // record and offline modes
  std::shared_ptr<TranscriptStore> transcripts;
  PipelineServices services;
};

/// Replay from a recorded corpus; the transport has nothing behind it.
Harness replay_harness(const std::filesystem::path& corpus_dir);
/// Record the offline model and the local web into `corpus_dir`.
Harness record_harness(const std::filesystem::path& corpus_dir);
/// Offline model and local web, nothing persisted.
Harness offline_harness();

PipelineConfig fixture_config(const std::filesystem::path& output_dir);

}  // namespace deepreport::testkit
