#include "harness.hpp"

#include <atomic>
#include <random>

#include "deepreport/error.hpp"

#ifndef DEEPREPORT_FIXTURE_DIR
#error "DEEPREPORT_FIXTURE_DIR must be defined"
#endif

namespace deepreport::testkit {

namespace {

std::shared_ptr<Retriever> make_retriever(SnapshotMode mode, std::shared_ptr<Transport> transport,
                                          std::shared_ptr<SnapshotStore> store, std::shared_ptr<Clock> clock) {
  RetrievalConfig config;
  config.mode = mode;
  HttpSearchProvider::Options search;
  search.endpoint = kSearchEndpoint;
  search.api_key = "fixture";
  return std::make_shared<Retriever>(config, std::make_shared<HttpSearchProvider>(search, transport),
                                     std::make_shared<PageFetcher>(PageFetcher::Options{}, transport),
                                     std::move(store), std::move(clock));
}

std::shared_ptr<Gateway> make_gateway(LlmMode mode, std::shared_ptr<TranscriptStore> transcripts,
                                      std::shared_ptr<ChatBackend> backend, std::shared_ptr<Clock> clock) {
  GatewayConfig config;
  config.mode = mode;
  auto gateway = std::make_shared<Gateway>(config, std::move(transcripts), std::move(clock));
  gateway->set_backend(std::move(backend));
  return gateway;
}

}  // namespace

std::filesystem::path fixture_dir() { return DEEPREPORT_FIXTURE_DIR; }
std::filesystem::path replay_dir() { return fixture_dir() / "replay"; }
std::filesystem::path dataset_path() { return fixture_dir() / "dataset" / "sample.ndjson"; }
std::filesystem::path pages_path() { return fixture_dir() / "web" / "pages.ndjson"; }

Timestamp fixture_time() { return *parse_timestamp("2025-06-30T12:00:00Z"); }

TempDir::TempDir() {
  static std::atomic<unsigned> counter{0};
  std::random_device rd;
  auto base = std::filesystem::temp_directory_path();
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto candidate = base / ("deepreport-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    if (std::filesystem::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
  throw PreconditionError("could not create a temporary directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

Harness replay_harness(const std::filesystem::path& corpus_dir) {
  Harness h;
  auto clock = std::make_shared<FixedClock>(fixture_time());
  h.transport = std::make_shared<CountingTransport>();
  h.transcripts = std::make_shared<TranscriptStore>(corpus_dir / "transcripts.ndjson");
  EndpointConfig endpoint{"https://llm.fixture.test/v1", "fixture", "offline", 0.0, std::chrono::seconds(5)};
  h.services.clock = clock;
  h.services.gateway = make_gateway(LlmMode::replay, h.transcripts,
                                    std::make_shared<OpenAiChatBackend>(endpoint, h.transport), clock);
  h.services.retriever = make_retriever(SnapshotMode::replay, h.transport,
                                        std::make_shared<SnapshotStore>(corpus_dir / "snapshot"), clock);
  return h;
}

Harness record_harness(const std::filesystem::path& corpus_dir) {
  Harness h;
  auto clock = std::make_shared<FixedClock>(fixture_time());
  h.web = std::make_shared<LocalWeb>(load_pages(pages_path()));
  h.model = std::make_shared<OfflineModel>();
  h.transport = std::make_shared<CountingTransport>(h.web);
  std::filesystem::create_directories(corpus_dir);
  h.transcripts = std::make_shared<TranscriptStore>(corpus_dir / "transcripts.ndjson");
  h.services.clock = clock;
  h.services.gateway = make_gateway(LlmMode::record, h.transcripts, h.model, clock);
  h.services.retriever = make_retriever(SnapshotMode::record, h.transport,
                                        std::make_shared<SnapshotStore>(corpus_dir / "snapshot"), clock);
  return h;
}

Harness offline_harness() {
  Harness h;
  auto clock = std::make_shared<FixedClock>(fixture_time());
  h.web = std::make_shared<LocalWeb>(load_pages(pages_path()));
  h.model = std::make_shared<OfflineModel>();
  h.transport = std::make_shared<CountingTransport>(h.web);
  h.services.clock = clock;
  h.services.gateway = make_gateway(LlmMode::live, nullptr, h.model, clock);
  h.services.retriever = make_retriever(SnapshotMode::live, h.transport, nullptr, clock);
  return h;
}

PipelineConfig fixture_config(const std::filesystem::path& output_dir) {
  PipelineConfig config;
  config.output_dir = output_dir;
  config.clarification_timeout = std::chrono::milliseconds(2000);
  return config;
}

}  // namespace deepreport::testkit
