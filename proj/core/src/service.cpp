#include "ewmark/service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <set>

#include <nlohmann/json.hpp>

#include "ewmark/attacks.hpp"
#include "ewmark/errors.hpp"
#include "ewmark/synth.hpp"
#include "ewmark/tokenize.hpp"
#include "ewmark/trigger.hpp"
#include "ewmark/wet.hpp"

namespace ewmark {
namespace eaas {

namespace {

using json = nlohmann::ordered_json;

json embedding_response(const Embedding& e) {
  json j;
  j["id"] = e.id;
  json arr = json::array();
  // Vectors travel at 32-bit float precision.
  for (double x : e.vector) arr.push_back(static_cast<float>(x));
  j["vector"] = std::move(arr);
  return j;
}

bool send_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && (errno == EINTR)) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

sockaddr_in make_address(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  const std::string resolved = (host == "localhost" || host.empty()) ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, resolved.c_str(), &addr.sin_addr) != 1) {
    throw InvalidParamsError("cannot parse IPv4 address '" + host + "'");
  }
  return addr;
}

}  // namespace

Server::Server(std::shared_ptr<EmbeddingService> service, const std::string& host,
               std::uint16_t port)
    : service_(std::move(service)), host_(host) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw BindFailureError("socket: " + std::string(strerror(errno)));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = make_address(host, port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string msg = strerror(errno);
    ::close(listen_fd_);
    throw BindFailureError("bind " + host + ":" + std::to_string(port) + ": " + msg);
  }
  if (::listen(listen_fd_, 16) != 0) {
    const std::string msg = strerror(errno);
    ::close(listen_fd_);
    throw BindFailureError("listen: " + msg);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  accept_thread_ = std::thread([this] { accept_loop(); });
}

Server::~Server() { stop(); }

void Server::stop() {
  bool expected = false;
  if (!stopping_.compare_exchange_strong(expected, true)) {
    if (accept_thread_.joinable()) accept_thread_.join();
    return;
  }
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(workers_mutex_);
    workers.swap(workers_);
  }
  for (std::thread& t : workers) {
    if (t.joinable()) t.join();
  }
}

void Server::accept_loop() {
  while (!stopping_.load()) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (stopping_.load()) break;
      if (errno == EINTR) continue;
      break;
    }
    std::lock_guard lock(workers_mutex_);
    workers_.emplace_back([this, fd] { handle_connection(fd); });
  }
}

void Server::handle_connection(int fd) {
  // One request per line; a bad line answers with an error object and the
  // connection stays open.
  std::string buffer;
  char chunk[4096];
  std::size_t line_no = 0;
  while (!stopping_.load()) {
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t start = 0;
    for (;;) {
      const std::size_t nl = buffer.find('\n', start);
      if (nl == std::string::npos) {
        buffer.erase(0, start);
        break;
      }
      const std::string line = buffer.substr(start, nl - start);
      start = nl + 1;
      ++line_no;
      if (line.empty()) continue;
      json response;
      json request = json::parse(line, nullptr, false);
      if (request.is_discarded() || !request.is_object()) {
        response["error"] = "malformed";
        response["line"] = line_no;
      } else {
        const std::string op = request.value("op", std::string());
        if (op == "info") {
          response["dim"] = service_->dim();
          response["backend"] = service_->backend_name();
        } else if (op == "embed") {
          if (!request.contains("text") || !request["text"].is_string()) {
            response["error"] = "embed request needs a string \"text\"";
            response["line"] = line_no;
          } else {
            TextRecord text;
            text.id = request.value("id", std::string());
            text.tokens = tokenize(request["text"].get<std::string>());
            try {
              response = embedding_response(service_->embed(text));
            } catch (const std::exception& err) {
              response = json();
              response["error"] = err.what();
              response["line"] = line_no;
            }
          }
        } else {
          response["error"] = "unknown op '" + op + "'";
          response["line"] = line_no;
        }
      }
      if (!send_all(fd, response.dump() + "\n")) {
        ::close(fd);
        return;
      }
    }
  }
  ::close(fd);
}

Client::Client(std::string host, std::uint16_t port, ClientOptions options)
    : host_(std::move(host)), port_(port), options_(options) {}

Client::~Client() { disconnect(); }

void Client::disconnect() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  read_buffer_.clear();
}

void Client::ensure_connected() {
  if (fd_ >= 0) return;
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw ProtocolError("socket: " + std::string(strerror(errno)));
  timeval tv{};
  tv.tv_sec = static_cast<long>(options_.timeout.count() / 1000);
  tv.tv_usec = static_cast<long>((options_.timeout.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
  sockaddr_in addr = make_address(host_, port_);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string msg = strerror(errno);
    ::close(fd);
    throw TimeoutError("connect " + host_ + ":" + std::to_string(port_) + ": " + msg);
  }
  fd_ = fd;
}

std::string Client::roundtrip(const std::string& request_line) {
  int attempts = 0;
  for (;;) {
    try {
      ensure_connected();
      if (!send_all(fd_, request_line)) {
        throw TimeoutError("send failed");
      }
      for (;;) {
        const std::size_t nl = read_buffer_.find('\n');
        if (nl != std::string::npos) {
          std::string line = read_buffer_.substr(0, nl);
          read_buffer_.erase(0, nl + 1);
          return line;
        }
        char chunk[4096];
        const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
        if (n <= 0) {
          throw TimeoutError(n == 0 ? "connection closed" : strerror(errno));
        }
        read_buffer_.append(chunk, static_cast<std::size_t>(n));
      }
    } catch (const TimeoutError&) {
      disconnect();
      if (++attempts > options_.max_retries) throw;
    }
  }
}

Client::Info Client::info() {
  json req;
  req["op"] = "info";
  const json resp = json::parse(roundtrip(req.dump() + "\n"), nullptr, false);
  if (resp.is_discarded() || !resp.is_object()) {
    throw ProtocolError("malformed info response");
  }
  if (resp.contains("error")) {
    throw ProtocolError(resp["error"].get<std::string>());
  }
  Info info;
  info.dim = resp.value("dim", 0u);
  info.backend = resp.value("backend", std::string());
  return info;
}

Embedding Client::embed(const TextRecord& text) {
  json req;
  req["op"] = "embed";
  req["id"] = text.id;
  req["text"] = join_tokens(text.tokens);
  const json resp = json::parse(roundtrip(req.dump() + "\n"), nullptr, false);
  if (resp.is_discarded() || !resp.is_object()) {
    throw ProtocolError("malformed embed response");
  }
  if (resp.contains("error")) {
    throw ProtocolError(resp["error"].get<std::string>());
  }
  if (!resp.contains("vector") || !resp["vector"].is_array()) {
    throw ProtocolError("embed response missing vector");
  }
  Embedding e;
  e.id = resp.value("id", text.id);
  e.vector = resp["vector"].get<std::vector<double>>();
  return e;
}

EmbeddingSet Client::query_batch(const std::vector<TextRecord>& texts) {
  EmbeddingSet set;
  for (const TextRecord& t : texts) set.add(embed(t));
  return set;
}

namespace {

class SyntheticBackend : public Backend {
 public:
  SyntheticBackend(std::size_t dim, std::uint64_t seed) : oracle_(dim, seed) {}
  std::size_t dim() const override { return oracle_.dim(); }
  std::string name() const override { return "synthetic"; }
  Embedding embed(const TextRecord& text) const override {
    return oracle_.embed(text);
  }

 private:
  SyntheticOracle oracle_;
};

class FileBackend : public Backend {
 public:
  explicit FileBackend(EmbeddingSet set) : set_(std::move(set)) {}
  std::size_t dim() const override { return set_.dim(); }
  std::string name() const override { return "file"; }
  Embedding embed(const TextRecord& text) const override {
    const Embedding* e = set_.find(text.id);
    if (e == nullptr) throw Error("no embedding stored for id '" + text.id + "'");
    return *e;
  }

 private:
  EmbeddingSet set_;
};

class TriggerBackend : public Backend {
 public:
  TriggerBackend(BackendPtr inner,
                 std::shared_ptr<const triggers::TriggerScheme> scheme)
      : inner_(std::move(inner)), scheme_(std::move(scheme)) {}
  std::size_t dim() const override { return inner_->dim(); }
  std::string name() const override { return "trigger-watermarked"; }
  Embedding embed(const TextRecord& text) const override {
    const Embedding e_o = inner_->embed(text);
    return triggers::inject_trigger_watermark(
        e_o, triggers::poison_weight(text, *scheme_), *scheme_);
  }

 private:
  BackendPtr inner_;
  std::shared_ptr<const triggers::TriggerScheme> scheme_;
};

class WetBackend : public Backend {
 public:
  WetBackend(BackendPtr inner, std::shared_ptr<const wet::TransformMatrix> matrix)
      : inner_(std::move(inner)), matrix_(std::move(matrix)) {}
  std::size_t dim() const override { return matrix_->w(); }
  std::string name() const override { return "wet-watermarked"; }
  Embedding embed(const TextRecord& text) const override {
    return wet::inject_wet(inner_->embed(text), *matrix_);
  }

 private:
  BackendPtr inner_;
  std::shared_ptr<const wet::TransformMatrix> matrix_;
};

class SurrogateBackend : public Backend {
 public:
  SurrogateBackend(std::shared_ptr<const attacks::SurrogateAttacker> model,
                   std::size_t feature_dim, std::uint64_t feature_seed)
      : model_(std::move(model)),
        feature_dim_(feature_dim),
        feature_seed_(feature_seed) {}
  std::size_t dim() const override { return model_->out_dim(); }
  std::string name() const override { return "surrogate"; }
  Embedding embed(const TextRecord& text) const override {
    Embedding e = model_->predict(hash_features(text, feature_dim_, feature_seed_),
                                  text.id);
    if (e.is_zero()) {
      throw ZeroVectorError("degenerate input: no features to embed");
    }
    return e;
  }

 private:
  std::shared_ptr<const attacks::SurrogateAttacker> model_;
  std::size_t feature_dim_;
  std::uint64_t feature_seed_;
};

}  // namespace

BackendPtr make_synthetic_backend(std::size_t dim, std::uint64_t seed) {
  return std::make_shared<SyntheticBackend>(dim, seed);
}

BackendPtr make_file_backend(EmbeddingSet set) {
  return std::make_shared<FileBackend>(std::move(set));
}

BackendPtr make_trigger_backend(
    BackendPtr inner, std::shared_ptr<const triggers::TriggerScheme> scheme) {
  return std::make_shared<TriggerBackend>(std::move(inner), std::move(scheme));
}

BackendPtr make_wet_backend(BackendPtr inner,
                            std::shared_ptr<const wet::TransformMatrix> matrix) {
  return std::make_shared<WetBackend>(std::move(inner), std::move(matrix));
}

BackendPtr make_surrogate_backend(
    std::shared_ptr<const attacks::SurrogateAttacker> model,
    std::size_t feature_dim, std::uint64_t feature_seed) {
  return std::make_shared<SurrogateBackend>(std::move(model), feature_dim,
                                            feature_seed);
}

}  // namespace eaas
}  // namespace ewmark
