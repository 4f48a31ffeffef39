#pragma once

// HTTP front end over loaded checkpoints: model listing, model solves and
// oracle solves with server-sent progress events.

#include "nsgen/io.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace nsgen {

struct RegistryEntry {
  std::string id;
  std::filesystem::path checkpoint;
  std::shared_ptr<const Checkpoint> model;  // loaded eagerly, never mutated
};

/// Registry file: {"models": [{"id": ..., "checkpoint": ...}, ...]} (a bare
/// array is accepted). Relative checkpoint paths resolve against the file's
/// directory.
std::vector<RegistryEntry> load_registry(const std::filesystem::path& file);

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

class Service {
 public:
  explicit Service(std::vector<RegistryEntry> entries) : entries_(std::move(entries)) {}

  const std::vector<RegistryEntry>& entries() const { return entries_; }
  const RegistryEntry* find(const std::string& id) const;

  nlohmann::json list_models() const;

  /// `accept` selects the field encoding: JSON arrays for application/json,
  /// base64 NSF1 otherwise.
  HttpReply solve(const std::string& body, const std::string& accept) const;

  /// Blocking oracle solve: 200 with the converged field, 408 with the
  /// partial field when the budget runs out (immediately for budget 0).
  HttpReply oracle_solve(const std::string& body) const;

  void install(httplib::Server& server) const;

 private:
  std::vector<RegistryEntry> entries_;
};

struct ServeOptions {
  std::filesystem::path registry;
  std::string host = "0.0.0.0";
  int port = 8089;
};

/// Resolves --registry/NSGEN_REGISTRY and --port/NSGEN_PORT; explicit values win.
ServeOptions resolve_serve_options(const std::string& registry_flag, int port_flag);

/// Blocks until the server stops.
int serve(const ServeOptions& options);

}  // namespace nsgen
