#pragma once

#include <httplib.h>

#include <chrono>
#include <memory>
#include <string>

#include "r3/error.hpp"

namespace r3::http {

/// "http://host:port/prefix" split into the client base and a path prefix.
struct Endpoint {
  std::string base;    // scheme://host[:port]
  std::string prefix;  // "" or "/prefix" without trailing slash
  std::string original;

  static Endpoint parse(const std::string& url) {
    Endpoint ep;
    ep.original = url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
      throw Error(ErrorCode::kConfig, "endpoint must start with http://: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      ep.base = url;
    } else {
      ep.base = url.substr(0, path_start);
      ep.prefix = url.substr(path_start);
      while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
    }
    return ep;
  }

  std::string path(const std::string& route) const { return prefix + route; }

  std::unique_ptr<httplib::Client> client(double timeout_seconds) const {
    auto c = std::make_unique<httplib::Client>(base);
    const auto usec = std::chrono::microseconds(static_cast<long long>(timeout_seconds * 1e6));
    c->set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(usec).count(),
                              static_cast<time_t>(usec.count() % 1000000));
    c->set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(usec).count(),
                        static_cast<time_t>(usec.count() % 1000000));
    return c;
  }
};

}  // namespace r3::http
