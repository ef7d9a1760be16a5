#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

namespace deepreport {

struct HttpRequest {
  std::string method = "GET";
  std::string url;
  std::map<std::string, std::string> headers;
  std::string body;
  std::chrono::milliseconds timeout{20000};
};

struct HttpResponse {
  int status = 0;
  std::map<std::string, std::string> headers;  // keys lower-cased
  std::string body;

  std::string header(const std::string& name) const;
};

/// Connection-level failure: DNS, refused, timeout, TLS.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The only path to the network. Everything that dials (model endpoints,
/// search provider, page fetches) goes through one of these.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
};

class HttplibTransport final : public Transport {
 public:
  HttpResponse send(const HttpRequest& request) override;
};

/// Counts every dial attempt and forwards to `inner`. With no inner
/// transport every dial throws, which is what replay runs want.
class CountingTransport final : public Transport {
 public:
  explicit CountingTransport(std::shared_ptr<Transport> inner = nullptr)
      : inner_(std::move(inner)) {}

  HttpResponse send(const HttpRequest& request) override;
  std::size_t dials() const noexcept { return dials_.load(); }

 private:
  std::shared_ptr<Transport> inner_;
  std::atomic<std::size_t> dials_{0};
};

}  // namespace deepreport
