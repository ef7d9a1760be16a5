#include "deepreport/transport.hpp"

#include <cctype>

#include <httplib.h>

#include "deepreport/error.hpp"
#include "deepreport/url.hpp"

namespace deepreport {

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::string HttpResponse::header(const std::string& name) const {
  auto it = headers.find(lower(name));
  return it == headers.end() ? std::string() : it->second;
}

HttpResponse HttplibTransport::send(const HttpRequest& request) {
  Url url;
  try {
    url = parse_url(request.url);
  } catch (const BadUrl& e) {
    throw TransportError(e.what());
  }
  std::string origin = url.scheme + "://" + url.host;
  if (url.port) origin += ":" + std::to_string(*url.port);

  httplib::Client client(origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout).count();
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  client.set_follow_location(true);
  client.set_decompress(true);

  httplib::Headers headers;
  for (const auto& [k, v] : request.headers) headers.emplace(k, v);

  std::string target = url.path.empty() ? "/" : url.path;
  if (!url.query.empty()) target += "?" + url.query;

  httplib::Result result;
  if (request.method == "POST") {
    auto it = request.headers.find("Content-Type");
    std::string content_type = it == request.headers.end() ? "application/json" : it->second;
    result = client.Post(target, headers, request.body, content_type);
  } else if (request.method == "HEAD") {
    result = client.Head(target, headers);
  } else {
    result = client.Get(target, headers);
  }
  if (!result) {
    throw TransportError(request.method + " " + request.url + ": " +
                         httplib::to_string(result.error()));
  }
  HttpResponse response;
  response.status = result->status;
  response.body = result->body;
  for (const auto& [k, v] : result->headers) response.headers[lower(k)] = v;
  return response;
}

HttpResponse CountingTransport::send(const HttpRequest& request) {
  dials_.fetch_add(1);
  if (!inner_) throw TransportError("network disabled: " + request.method + " " + request.url);
  return inner_->send(request);
}

}  // namespace deepreport
