#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "ewmark/types.hpp"

namespace ewmark {
namespace eaas {

// A deterministic embedding backend: identical requests yield identical
// unit-vector responses.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;
  virtual Embedding embed(const TextRecord& text) const = 0;
};

using BackendPtr = std::shared_ptr<const Backend>;

// Wraps a backend with the request counter. The counter is the only shared
// mutable state and is updated atomically.
class EmbeddingService {
 public:
  explicit EmbeddingService(BackendPtr backend) : backend_(std::move(backend)) {}

  std::size_t dim() const { return backend_->dim(); }
  std::string backend_name() const { return backend_->name(); }
  std::uint64_t requests_served() const { return counter_.load(); }

  Embedding embed(const TextRecord& text) const {
    Embedding e = backend_->embed(text);
    counter_.fetch_add(1, std::memory_order_relaxed);
    return e;
  }

 private:
  BackendPtr backend_;
  mutable std::atomic<std::uint64_t> counter_{0};
};

// Wire protocol (newline-delimited JSON over a stream socket, UTF-8):
//   request  {"op":"embed","id":...,"text":...} | {"op":"info"}
//   response {"id":...,"vector":[...]} | {"dim":...,"backend":...}
//   error    {"error": string, "line"?: int}
// Vectors travel at 32-bit float precision, matching the binary file
// format. One bad request answers with an error line; the connection
// stays open.
class Server {
 public:
  Server(std::shared_ptr<EmbeddingService> service, const std::string& host,
         std::uint16_t port);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Port actually bound (relevant when constructed with port 0).
  std::uint16_t port() const { return port_; }
  const std::string& host() const { return host_; }

  void stop();

 private:
  void accept_loop();
  void handle_connection(int fd);

  std::shared_ptr<EmbeddingService> service_;
  std::string host_;
  std::uint16_t port_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::vector<std::thread> workers_;
  std::mutex workers_mutex_;
};

struct ClientOptions {
  std::chrono::milliseconds timeout{5000};
  int max_retries = 3;
};

// Blocking client for the wire protocol. Retries transient connection
// failures up to the bounded count; responses come back in request order.
class Client {
 public:
  Client(std::string host, std::uint16_t port, ClientOptions options = {});
  ~Client();

  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  struct Info {
    std::size_t dim = 0;
    std::string backend;
  };
  Info info();

  Embedding embed(const TextRecord& text);
  EmbeddingSet query_batch(const std::vector<TextRecord>& texts);

 private:
  void ensure_connected();
  void disconnect();
  std::string roundtrip(const std::string& request_line);

  std::string host_;
  std::uint16_t port_;
  ClientOptions options_;
  int fd_ = -1;
  std::string read_buffer_;
};

}  // namespace eaas

namespace triggers {
class TriggerScheme;
}
namespace wet {
class TransformMatrix;
}
namespace attacks {
class SurrogateAttacker;
}

namespace eaas {

// Built-in backends.
BackendPtr make_synthetic_backend(std::size_t dim, std::uint64_t seed);
BackendPtr make_file_backend(EmbeddingSet set);  // lookup by text id
BackendPtr make_trigger_backend(BackendPtr inner,
                                std::shared_ptr<const triggers::TriggerScheme> scheme);
BackendPtr make_wet_backend(BackendPtr inner,
                            std::shared_ptr<const wet::TransformMatrix> matrix);
// The surrogate needs the featurizer parameters used at training time.
BackendPtr make_surrogate_backend(
    std::shared_ptr<const attacks::SurrogateAttacker> model,
    std::size_t feature_dim, std::uint64_t feature_seed);

}  // namespace eaas
}  // namespace ewmark
