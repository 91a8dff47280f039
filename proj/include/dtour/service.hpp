#pragma once

// Session service: a transport-independent controller that turns client
// frames into engine calls and server frames, and a localhost HTTP +
// WebSocket server (Boost.Beast) that hosts one controller per client.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "dtour/engine.hpp"
#include "dtour/error.hpp"
#include "dtour/protocol.hpp"

namespace dtour {

struct ControllerOptions {
  double frame_budget_hz = 120.0;
  std::size_t max_chunk_bytes = protocol::kMaxChunkBytes;
};

/// Byte counts of everything a controller sent, by message type.
struct TrafficLog {
  struct Entry {
    std::string type;
    std::size_t bytes = 0;
  };
  std::vector<Entry> frames;

  std::size_t total(std::string_view type) const {
    std::size_t s = 0;
    for (const auto& e : frames) {
      if (e.type == type) s += e.bytes;
    }
    return s;
  }
  std::size_t count(std::string_view type) const {
    return static_cast<std::size_t>(
        std::count_if(frames.begin(), frames.end(), [&](const Entry& e) { return e.type == type; }));
  }
};

/// Drives one Session from protocol frames. Single-threaded: the owner calls
/// open() once, then handle() for each incoming frame and poll() on a timer.
/// set_t messages are coalesced to the latest value and bases are pushed at
/// most at the frame budget. A protocol violation sends an error and closes.
class SessionController {
 public:
  using Clock = std::chrono::steady_clock;

  explicit SessionController(std::unique_ptr<Session> session, ControllerOptions opt = {})
      : session_(std::move(session)), opt_(opt) {}

  Session& session() { return *session_; }
  const Session& session() const { return *session_; }
  bool closed() const noexcept { return closed_; }
  const TrafficLog& traffic() const noexcept { return traffic_; }
  double frame_budget_hz() const noexcept { return opt_.frame_budget_hz; }
  Clock::duration poll_interval() const {
    return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / opt_.frame_budget_hz));
  }

  /// hello, then every column as data chunks, then the initial state,
  /// selection and basis.
  std::vector<protocol::Frame> open(Clock::time_point now) {
    std::vector<protocol::Frame> out;
    const Dataset& ds = session_->data();
    emit(out, protocol::make_hello(ds, session_->path()));
    std::uint32_t column = 0;
    for (const auto& col : ds.columns) {
      stream_column(out, column++, protocol::ChunkEncoding::f32, protocol::column_bytes(col));
    }
    for (const auto& l : ds.labels) {
      if (l.kind == LabelColumn::Kind::categorical) {
        stream_column(out, column++, protocol::ChunkEncoding::u16, protocol::column_bytes(l.codes));
      } else {
        stream_column(out, column++, protocol::ChunkEncoding::f32, protocol::column_bytes(l.values));
      }
    }
    emit(out, current_state());
    emit_selection(out);
    last_poll_ = now;
    emit_basis(out, now);
    return out;
  }

  std::vector<protocol::Frame> handle(const protocol::Frame& frame, Clock::time_point now) {
    std::vector<protocol::Frame> out;
    if (closed_) return out;
    protocol::ClientMessage msg;
    try {
      msg = protocol::decode_client(frame);
      if (last_client_seq_ && msg.seq <= *last_client_seq_) {
        throw Error(ErrorCode::ProtocolViolation, "sequence number " + std::to_string(msg.seq) +
                                                      " does not increase");
      }
    } catch (const Error& e) {
      emit(out, protocol::ErrorMessage{std::string(to_string(e.code())), e.what()});
      closed_ = true;
      return out;
    }
    last_client_seq_ = msg.seq;
    if (const auto* s = std::get_if<protocol::SetT>(&msg.body)) {
      if (!std::isfinite(s->t)) {
        emit(out, protocol::ErrorMessage{"InvalidArgument", "t is not finite"});
      } else {
        pending_t_ = s->t;
      }
      return out;
    }
    flush_pending_t();
    try {
      dispatch(msg.body, out);
    } catch (const Error& e) {
      emit(out, protocol::ErrorMessage{std::string(to_string(e.code())), e.what()});
    }
    (void)now;
    return out;
  }

  /// Advances playback and transitions to `now` and pushes the basis when it
  /// changed and the frame budget allows.
  std::vector<protocol::Frame> poll(Clock::time_point now) {
    std::vector<protocol::Frame> out;
    if (closed_) return out;
    const double dt = std::max(0.0, std::chrono::duration<double>(now - last_poll_).count());
    last_poll_ = now;
    flush_pending_t();
    if (session_->playing() || session_->transitioning()) session_->tick(dt);
    if (session_->revision() != sent_revision_ && (!last_basis_ || now - *last_basis_ >= poll_interval())) {
      emit_basis(out, now);
    }
    const auto state = current_state();
    if (!same_state(state, sent_state_)) emit(out, state);
    return out;
  }

 private:
  static bool same_state(const protocol::StateUpdate& a, const protocol::StateUpdate& b) {
    // t travels with every basis update, so it does not make the state dirty.
    return a.mode == b.mode && a.playing == b.playing && a.speed == b.speed && a.transitioning == b.transitioning &&
           a.selected == b.selected && a.encoding == b.encoding;
  }

  protocol::StateUpdate current_state() const {
    return {session_->mode(),     session_->t(),
            session_->playing(),  session_->speed(),
            session_->transitioning(), session_->selection().count(),
            std::string(to_string(session_->encoding().kind))};
  }

  void flush_pending_t() {
    if (pending_t_) {
      session_->set_t(*pending_t_);
      pending_t_.reset();
    }
  }

  void dispatch(const protocol::ClientBody& body, std::vector<protocol::Frame>& out) {
    using namespace protocol;
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, SetMode>) {
            session_->set_mode(m.mode);
          } else if constexpr (std::is_same_v<T, Drag>) {
            session_->drag({m.dim, m.direction});
          } else if constexpr (std::is_same_v<T, RotateResidual>) {
            if (!session_->rotate_residual(m.angle, m.axis, m.begin)) {
              emit(out, ErrorMessage{"NoAxis", "the data has no residual direction outside the view plane"});
            }
          } else if constexpr (std::is_same_v<T, Lasso>) {
            session_->lasso(m.polygon, m.combine);
            emit_selection(out);
          } else if constexpr (std::is_same_v<T, LabelSelect>) {
            session_->select_labels(m.column, m.values, m.combine);
            emit_selection(out);
          } else if constexpr (std::is_same_v<T, SetEncoding>) {
            session_->set_encoding(m.encoding);
          } else if constexpr (std::is_same_v<T, Play>) {
            session_->play(m.speed);
          } else if constexpr (std::is_same_v<T, Pause>) {
            session_->pause();
          } else if constexpr (std::is_same_v<T, RequestPreviews>) {
            const Previews pv = keyframe_previews(session_->data(), session_->path().sequence(), m.thumb_points, m.seed);
            PreviewsPayload payload{pv.indices, {}};
            for (const auto& f : pv.frames) payload.frames.push_back(f.xy);
            emit(out, std::move(payload));
          } else if constexpr (std::is_same_v<T, RequestSnapshot>) {
            emit(out, SnapshotPayload{m.format, session_->snapshot(m.format)});
          } else if constexpr (std::is_same_v<T, SetFrameBudget>) {
            if (!(m.hz > 0.0) || m.hz > 1000.0) throw Error(ErrorCode::InvalidArgument, "frame budget must be in (0, 1000] Hz");
            opt_.frame_budget_hz = m.hz;
          } else {
            static_assert(std::is_same_v<T, SetT>);
          }
        },
        body);
  }

  void stream_column(std::vector<protocol::Frame>& out, std::uint32_t column, protocol::ChunkEncoding enc,
                     const std::string& bytes) {
    for (auto& c : protocol::chunk_column(column, enc, bytes, opt_.max_chunk_bytes)) emit(out, std::move(c));
  }

  void emit_selection(std::vector<protocol::Frame>& out) {
    emit(out, protocol::make_selection_update(session_->selection(), sent_selection_ ? &*sent_selection_ : nullptr));
    sent_selection_ = session_->selection();
  }

  void emit_basis(std::vector<protocol::Frame>& out, Clock::time_point now) {
    emit(out, protocol::make_basis_update(session_->basis(), session_->t(), session_->gain()));
    sent_revision_ = session_->revision();
    last_basis_ = now;
  }

  template <typename Body>
  void emit(std::vector<protocol::Frame>& out, Body body) {
    if constexpr (std::is_same_v<Body, protocol::StateUpdate>) sent_state_ = body;
    protocol::ServerMessage msg{next_seq_++, std::move(body)};
    out.push_back(protocol::encode(msg));
    traffic_.frames.push_back({type_name(msg.body), out.back().bytes.size()});
  }

  static std::string type_name(const protocol::ServerBody& b) {
    static constexpr const char* names[] = {"hello",    "data_chunk", "basis", "selection",
                                            "previews", "snapshot",   "error", "state"};
    return names[b.index()];
  }

  std::unique_ptr<Session> session_;
  ControllerOptions opt_;
  bool closed_ = false;
  std::uint64_t next_seq_ = 1;
  std::optional<std::uint64_t> last_client_seq_;
  std::optional<double> pending_t_;
  std::uint64_t sent_revision_ = ~std::uint64_t{0};
  std::optional<Clock::time_point> last_basis_;
  Clock::time_point last_poll_{};
  protocol::StateUpdate sent_state_;
  std::optional<Selection> sent_selection_;
  TrafficLog traffic_;
};

// ---------------------------------------------------------------------------
// Network server

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 7700;          // 0 picks a free port
  std::filesystem::path ui_dir;        // static UI bundle; empty serves a placeholder page
  std::string websocket_path = "/ws";
  ControllerOptions controller;
  SessionOptions session;
};

namespace detail {

namespace beast = boost::beast;
namespace http = boost::beast::http;
namespace websocket = boost::beast::websocket;
namespace net = boost::asio;
using tcp = boost::asio::ip::tcp;

inline const char* mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".wasm") return "application/wasm";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

inline constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>dtour</title></head><body>"
    "<h1>dtour session server</h1><p>No UI bundle is installed. Pass <code>--ui-dir</code> to serve one, "
    "or connect a client to the WebSocket endpoint <code>/ws</code>.</p></body></html>";

}  // namespace detail

/// Localhost server: static files over HTTP and one WebSocket session at a
/// time. Construction binds the port (BindFailure on error); run() serves
/// until stop().
class Server {
 public:
  Server(std::shared_ptr<const Dataset> data, std::shared_ptr<const TourPath> path, ServerOptions opt = {})
      : data_(std::move(data)), path_(std::move(path)), opt_(std::move(opt)), acceptor_(ioc_) {
    namespace net = detail::net;
    boost::system::error_code ec;
    const auto address = net::ip::make_address(opt_.address, ec);
    if (ec) throw Error(ErrorCode::BindFailure, "bad address '" + opt_.address + "': " + ec.message());
    const detail::tcp::endpoint ep{address, opt_.port};
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) {
      throw Error(ErrorCode::BindFailure,
                  "cannot listen on " + opt_.address + ":" + std::to_string(opt_.port) + ": " + ec.message());
    }
    port_ = acceptor_.local_endpoint().port();
    if (data_->n_dims() != path_->dims()) {
      throw Error(ErrorCode::DimensionMismatch, "tour and data dimensions differ");
    }
  }

  unsigned short port() const noexcept { return port_; }

  void run() {
    do_accept();
    ioc_.run();
  }

  /// Safe to call from any thread.
  void stop() {
    detail::net::post(ioc_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
      ioc_.stop();
    });
  }

 private:
  class WsSession;
  class HttpConnection;

  void do_accept();

  std::shared_ptr<const Dataset> data_;
  std::shared_ptr<const TourPath> path_;
  ServerOptions opt_;
  detail::net::io_context ioc_;
  detail::tcp::acceptor acceptor_;
  unsigned short port_ = 0;
  bool session_active_ = false;
};

class Server::WsSession : public std::enable_shared_from_this<Server::WsSession> {
 public:
  WsSession(Server& server, detail::tcp::socket socket)
      : server_(server),
        ws_(std::move(socket)),
        timer_(ws_.get_executor()),
        controller_(std::make_unique<Session>(server.data_, server.path_, server.opt_.session),
                    server.opt_.controller) {}

  void start(detail::http::request<detail::http::string_body> req) {
    server_.session_active_ = true;
    ws_.read_message_max(std::size_t{64} << 20);
    ws_.async_accept(req, [self = shared_from_this()](boost::system::error_code ec) {
      if (ec) return self->finish();
      self->enqueue(self->controller_.open(SessionController::Clock::now()));
      self->do_read();
      self->schedule_poll();
    });
  }

 private:
  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
      if (ec) return self->finish();
      protocol::Frame in{!self->ws_.got_text(), detail::beast::buffers_to_string(self->buffer_.data())};
      self->buffer_.consume(self->buffer_.size());
      self->enqueue(self->controller_.handle(in, SessionController::Clock::now()));
      if (self->controller_.closed()) {
        self->closing_ = true;
        self->maybe_close();
        return;
      }
      self->do_read();
    });
  }

  void schedule_poll() {
    timer_.expires_after(controller_.poll_interval());
    timer_.async_wait([self = shared_from_this()](boost::system::error_code ec) {
      if (ec || self->done_ || self->closing_) return;
      self->enqueue(self->controller_.poll(SessionController::Clock::now()));
      self->schedule_poll();
    });
  }

  void enqueue(std::vector<protocol::Frame> frames) {
    for (auto& f : frames) outbox_.push_back(std::move(f));
    if (!writing_) write_next();
  }

  void write_next() {
    if (outbox_.empty() || done_) {
      writing_ = false;
      maybe_close();
      return;
    }
    writing_ = true;
    ws_.binary(outbox_.front().binary);
    ws_.async_write(detail::net::buffer(outbox_.front().bytes),
                    [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
                      if (ec) return self->finish();
                      self->outbox_.pop_front();
                      self->write_next();
                    });
  }

  void maybe_close() {
    if (!closing_ || writing_ || !outbox_.empty() || done_) return;
    ws_.async_close(detail::websocket::close_code::policy_error,
                    [self = shared_from_this()](boost::system::error_code) { self->finish(); });
  }

  void finish() {
    if (done_) return;
    done_ = true;
    timer_.cancel();
    server_.session_active_ = false;
  }

  Server& server_;
  detail::websocket::stream<detail::tcp::socket> ws_;
  detail::net::steady_timer timer_;
  detail::beast::flat_buffer buffer_;
  SessionController controller_;
  std::deque<protocol::Frame> outbox_;
  bool writing_ = false;
  bool closing_ = false;
  bool done_ = false;
};

class Server::HttpConnection : public std::enable_shared_from_this<Server::HttpConnection> {
 public:
  HttpConnection(Server& server, detail::tcp::socket socket) : server_(server), socket_(std::move(socket)) {}

  void start() {
    detail::http::async_read(socket_, buffer_, req_,
                             [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
                               if (!ec) self->on_request();
                             });
  }

 private:
  void on_request() {
    namespace http = detail::http;
    if (detail::websocket::is_upgrade(req_)) {
      if (req_.target() != server_.opt_.websocket_path) return respond(http::status::not_found, "text/plain", "not found");
      if (server_.session_active_) {
        return respond(http::status::conflict, "text/plain", "a client is already connected");
      }
      std::make_shared<WsSession>(server_, std::move(socket_))->start(std::move(req_));
      return;
    }
    if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
      return respond(http::status::method_not_allowed, "text/plain", "method not allowed");
    }
    std::string target(req_.target());
    target = target.substr(0, target.find('?'));
    if (target.empty() || target.back() == '/') target += "index.html";
    if (target.find("..") != std::string::npos) return respond(http::status::bad_request, "text/plain", "bad path");
    if (!server_.opt_.ui_dir.empty()) {
      const auto file = server_.opt_.ui_dir / std::filesystem::path(target).relative_path();
      std::ifstream in(file, std::ios::binary);
      if (in) {
        std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return respond(http::status::ok, detail::mime_type(file), std::move(body));
      }
    }
    if (target == "/index.html") return respond(http::status::ok, "text/html; charset=utf-8", detail::kPlaceholderPage);
    respond(http::status::not_found, "text/plain", "not found");
  }

  void respond(detail::http::status status, const char* type, std::string body) {
    namespace http = detail::http;
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::server, "dtour");
    res->set(http::field::content_type, type);
    res->keep_alive(false);
    res->body() = req_.method() == http::verb::head ? std::string() : std::move(body);
    res->prepare_payload();
    http::async_write(socket_, *res, [self = shared_from_this(), res](boost::system::error_code, std::size_t) {
      boost::system::error_code ec;
      self->socket_.shutdown(detail::tcp::socket::shutdown_send, ec);
    });
  }

  Server& server_;
  detail::tcp::socket socket_;
  detail::beast::flat_buffer buffer_;
  detail::http::request<detail::http::string_body> req_;
};

inline void Server::do_accept() {
  acceptor_.async_accept([this](boost::system::error_code ec, detail::tcp::socket socket) {
    if (ec) return;
    std::make_shared<HttpConnection>(*this, std::move(socket))->start();
    do_accept();
  });
}

}  // namespace dtour
