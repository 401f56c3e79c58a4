// Copyright 2026 The LILAC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// WebSocket + static HTTP on one port. Every connection gets its own frame
// source and tick timer. All I/O and ticking run on one io_context thread,
// so a session never waits on a socket: writes are queued, and when a
// client falls behind its oldest unsent state_update frames are dropped.

#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "lilac/service/runner.hpp"
#include "lilac/service/wire.hpp"

namespace lilac::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 0;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;
  double tick_hz = 10.0;
  std::size_t outbound_limit = 64;  // queued frames per connection
};

using SourceFactory = std::function<std::unique_ptr<FrameSource>(const std::string& session_id)>;

struct ServerStats {
  std::atomic<long> sessions{0};
  std::atomic<long> frames_sent{0};
  std::atomic<long> frames_dropped{0};
  std::atomic<long> errors_sent{0};
};

namespace detail {

inline std::string mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, std::unique_ptr<FrameSource> source, const ServerConfig& config, ServerStats& stats)
      : ws_(std::move(socket)),
        timer_(ws_.get_executor()),
        source_(std::move(source)),
        period_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / config.tick_hz))),
        limit_(config.outbound_limit),
        stats_(stats) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return spdlog::warn("websocket handshake failed: {}", ec.message());
      self->on_open();
    });
  }

 private:
  void on_open() {
    ++stats_.sessions;
    spdlog::info("session {} opened", source_->id());
    try {
      for (auto& m : source_->start()) send(m);
    } catch (const std::exception& e) {
      send(error_message(source_->id(), source_->next_seq(), "start_failed", e.what()));
      finish();
      return;
    }
    next_ = std::chrono::steady_clock::now() + period_;
    schedule();
    read();
  }

  // Absolute deadlines keep the rate from drifting; after a long stall the
  // schedule restarts from now instead of bursting to catch up.
  void schedule() {
    timer_.expires_at(next_);
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closed_) return;
      self->on_tick();
    });
  }

  void on_tick() {
    try {
      for (auto& m : source_->step()) send(m);
    } catch (const std::exception& e) {
      spdlog::error("session {} tick failed: {}", source_->id(), e.what());
      send(error_message(source_->id(), source_->next_seq(), "internal", e.what()));
      finish();
      return;
    }
    if (source_->finished()) {
      finish();
      return;
    }
    next_ += period_;
    const auto now = std::chrono::steady_clock::now();
    if (now > next_ + period_) next_ = now + period_;
    schedule();
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->on_disconnect(ec);
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->on_frame(text);
      if (!self->closed_) self->read();
    });
  }

  void on_frame(const std::string& text) {
    std::optional<std::uint64_t> ref;
    try {
      WireMessage m = decode(text);
      ref = m.seq;
      inbound_.accept(m.seq);
      if (!client_may_send(m.kind)) {
        throw WireError("bad_direction", std::string(to_string(m.kind)) + " is server-to-client only");
      }
      if (!m.session.empty() && m.session != source_->id()) {
        throw WireError("bad_session", "frame addressed to session '" + m.session + "'");
      }
      source_->enqueue(std::move(m));
    } catch (const WireError& e) {
      ++stats_.errors_sent;
      send(error_message(source_->id(), source_->next_seq(), e.code(), e.what(), ref));
    }
  }

  void on_disconnect(beast::error_code ec) {
    if (closed_) return;
    closed_ = true;
    timer_.cancel();
    if (ec != websocket::error::closed) spdlog::info("session {} disconnected: {}", source_->id(), ec.message());
    if (auto* live = dynamic_cast<LiveSession*>(source_.get())) {
      std::vector<WireMessage> ignored;
      live->close(ignored, "disconnected");
    }
  }

  void send(const WireMessage& m) {
    if (closed_) return;
    if (outq_.size() >= limit_) {
      // Keep control and lifecycle frames; shed the oldest queued state.
      const std::size_t first = writing_ ? 1 : 0;
      for (std::size_t i = first; i < outq_.size(); ++i) {
        if (outq_[i].second == MessageKind::kStateUpdate) {
          outq_.erase(outq_.begin() + static_cast<long>(i));
          ++stats_.frames_dropped;
          break;
        }
      }
    }
    outq_.emplace_back(encode(m), m.kind);
    if (!writing_) write();
  }

  void write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(outq_.front().first), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->outq_.pop_front();
      self->writing_ = false;
      if (ec) {
        self->on_disconnect(ec);
        return;
      }
      ++self->stats_.frames_sent;
      if (!self->outq_.empty()) {
        self->write();
      } else if (self->closing_) {
        self->close();
      }
    });
  }

  void finish() {
    closing_ = true;
    timer_.cancel();
    if (!writing_ && outq_.empty()) close();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
  }

  websocket::stream<beast::tcp_stream> ws_;
  asio::steady_timer timer_;
  std::unique_ptr<FrameSource> source_;
  std::chrono::steady_clock::duration period_;
  std::chrono::steady_clock::time_point next_;
  std::size_t limit_;
  ServerStats& stats_;
  beast::flat_buffer buffer_;
  std::deque<std::pair<std::string, MessageKind>> outq_;
  Sequencer inbound_;
  bool writing_ = false;
  bool closing_ = false;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, const ServerConfig& config, const SourceFactory& factory, ServerStats& stats,
              std::atomic<long>& counter)
      : stream_(std::move(socket)), config_(config), factory_(factory), stats_(stats), counter_(counter) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->on_request();
    });
  }

 private:
  void on_request() {
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      const std::string id = "s" + std::to_string(++counter_);
      std::unique_ptr<FrameSource> source;
      try {
        source = factory_(id);
      } catch (const std::exception& e) {
        spdlog::error("cannot create session: {}", e.what());
        return;
      }
      std::make_shared<WsSession>(stream_.release_socket(), std::move(source), config_, stats_)->run(std::move(req_));
      return;
    }
    respond(static_response());
  }

  http::response<http::string_body> static_response() {
    auto reply = [&](http::status status, std::string body, std::string type) {
      http::response<http::string_body> res{status, req_.version()};
      res.set(http::field::content_type, type);
      res.keep_alive(false);
      res.body() = std::move(body);
      res.prepare_payload();
      return res;
    };
    if (req_.method() != http::verb::get) return reply(http::status::method_not_allowed, "GET only\n", "text/plain");
    std::string target(req_.target());
    target = target.substr(0, target.find('?'));
    if (target == "/health") return reply(http::status::ok, "{\"ok\":true,\"protocol\":1}", "application/json");
    if (!config_.static_dir || target.find("..") != std::string::npos || target.empty() || target[0] != '/') {
      return reply(http::status::not_found, "not found\n", "text/plain");
    }
    if (target == "/") target = "/index.html";
    const std::filesystem::path path = *config_.static_dir / target.substr(1);
    std::ifstream in(path, std::ios::binary);
    if (!in) return reply(http::status::not_found, "not found\n", "text/plain");
    std::ostringstream body;
    body << in.rdbuf();
    return reply(http::status::ok, body.str(), mime_type(path));
  }

  void respond(http::response<http::string_body> res) {
    auto sp = std::make_shared<http::response<http::string_body>>(std::move(res));
    http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  const ServerConfig& config_;
  const SourceFactory& factory_;
  ServerStats& stats_;
  std::atomic<long>& counter_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace detail

class Server {
 public:
  Server(ServerConfig config, SourceFactory factory)
      : config_(std::move(config)), factory_(std::move(factory)), acceptor_(ioc_) {
    const tcp::endpoint ep(asio::ip::make_address(config_.address), config_.port);
    beast::error_code ec;
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) {
      throw std::runtime_error("cannot listen on " + config_.address + ":" + std::to_string(config_.port) + ": " +
                               ec.message());
    }
    accept();
  }

  ~Server() { stop(); }
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const { return acceptor_.local_endpoint().port(); }
  const ServerStats& stats() const { return stats_; }

  // Runs on a background thread.
  void start() {
    thread_ = std::thread([this] { ioc_.run(); });
  }

  // Runs on the calling thread until stop() or SIGINT/SIGTERM.
  void run() {
    asio::signal_set signals(ioc_, SIGINT, SIGTERM);
    signals.async_wait([this](beast::error_code, int) { ioc_.stop(); });
    ioc_.run();
  }

  void stop() {
    ioc_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  void accept() {
    acceptor_.async_accept(asio::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (!ec) {
        std::make_shared<detail::HttpSession>(std::move(socket), config_, factory_, stats_, counter_)->run();
      }
      if (acceptor_.is_open()) accept();
    });
  }

  ServerConfig config_;
  SourceFactory factory_;
  asio::io_context ioc_{1};
  tcp::acceptor acceptor_;
  std::thread thread_;
  ServerStats stats_;
  std::atomic<long> counter_{0};
};

// Blocking client used by tests and the CLI probe.
class Client {
 public:
  Client(const std::string& host, unsigned short port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    auto results = resolver.resolve(host, std::to_string(port));
    asio::connect(ws_.next_layer(), results.begin(), results.end());
    ws_.handshake(host + ":" + std::to_string(port), "/");
  }

  void send(WireMessage m) {
    m.seq = seq_.next();
    if (m.session.empty()) m.session = session_;
    send_text(encode(m));
  }

  void send_text(const std::string& text) {
    ws_.text(true);
    ws_.write(asio::buffer(text));
  }

  // Blocks for the next frame; nullopt once the server closes.
  std::optional<WireMessage> receive() {
    beast::flat_buffer buffer;
    beast::error_code ec;
    ws_.read(buffer, ec);
    if (ec) return std::nullopt;
    WireMessage m = decode(beast::buffers_to_string(buffer.data()));
    if (session_.empty()) session_ = m.session;
    return m;
  }

  void close() {
    beast::error_code ec;
    ws_.close(websocket::close_code::normal, ec);
  }

 private:
  asio::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
  Sequencer seq_;
  std::string session_;
};

inline WireMessage client_message(MessageKind kind, nlohmann::json payload = nlohmann::json::object()) {
  WireMessage m;
  m.kind = kind;
  m.payload = std::move(payload);
  return m;
}

}  // namespace lilac::service
