#pragma once

#include <filesystem>
#include <memory>
#include <string>

namespace annotrace {

/// Read-mostly HTTP API over a directory of session bundles. Manual
/// annotation edits are appended to each session's annotations.jsonl.
class Service {
 public:
  explicit Service(std::filesystem::path root);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Throws Error(BindFailure).
  void bind(const std::string& host, int port);
  /// Binds an ephemeral port and returns it. Throws Error(BindFailure).
  int bind_any_port(const std::string& host);
  /// Serves until stop(); call after bind.
  void run();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// "host:port" with host defaulting to 127.0.0.1; throws SchemaViolation.
std::pair<std::string, int> parse_bind_address(const std::string& text);

}  // namespace annotrace
