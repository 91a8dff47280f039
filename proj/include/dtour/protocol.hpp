#pragma once

// Session wire protocol. Control messages are JSON text frames
// {"seq": n, "type": ..., ...}; bulk messages are binary frames with a
// 16-byte header (magic "DTF1", u32 kind, u64 payload length) followed by a
// payload that starts with the u64 sequence number. All integers and floats
// are little-endian.

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtour/dataio.hpp"
#include "dtour/dataset.hpp"
#include "dtour/engine.hpp"
#include "dtour/error.hpp"
#include "dtour/geometry.hpp"
#include "dtour/tourpath.hpp"

namespace dtour::protocol {

inline constexpr std::uint32_t kProtocolVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;
/// Upper bound on any data_chunk frame, header included.
inline constexpr std::size_t kMaxFrameBytes = std::size_t{4} << 20;
/// Frame header, sequence number and chunk descriptor ahead of the payload.
inline constexpr std::size_t kChunkOverheadBytes = kHeaderBytes + 8 + 24;
inline constexpr std::size_t kMaxChunkBytes = kMaxFrameBytes - kChunkOverheadBytes;
inline constexpr char kMagic[4] = {'D', 'T', 'F', '1'};

/// One transport message: a text (JSON) or binary frame.
struct Frame {
  bool binary = false;
  std::string bytes;
  friend bool operator==(const Frame&, const Frame&) = default;
};

enum class FrameKind : std::uint32_t { data_chunk = 1, basis = 2, selection = 3, previews = 4, snapshot = 5 };

// ---------------------------------------------------------------------------
// Client -> server

struct SetT {
  double t = 0.0;
  friend bool operator==(const SetT&, const SetT&) = default;
};
struct SetMode {
  Mode mode = Mode::guided;
  friend bool operator==(const SetMode&, const SetMode&) = default;
};
struct Drag {
  std::size_t dim = 0;
  std::array<double, 2> direction{0.0, 0.0};
  friend bool operator==(const Drag&, const Drag&) = default;
};
struct RotateResidual {
  double angle = 0.0;
  std::array<double, 2> axis{1.0, 0.0};  // in-plane rotation axis
  bool begin = false;                    // starts a new gesture
  friend bool operator==(const RotateResidual&, const RotateResidual&) = default;
};
struct Lasso {
  std::vector<Point2> polygon;
  Combine combine = Combine::replace;
  friend bool operator==(const Lasso& a, const Lasso& b) {
    if (a.combine != b.combine || a.polygon.size() != b.polygon.size()) return false;
    for (std::size_t i = 0; i < a.polygon.size(); ++i) {
      if (a.polygon[i].x != b.polygon[i].x || a.polygon[i].y != b.polygon[i].y) return false;
    }
    return true;
  }
};
struct LabelSelect {
  std::string column;
  std::vector<std::string> values;
  Combine combine = Combine::replace;
  friend bool operator==(const LabelSelect&, const LabelSelect&) = default;
};
struct SetEncoding {
  ColorEncoding encoding;
  friend bool operator==(const SetEncoding& a, const SetEncoding& b) {
    return a.encoding.kind == b.encoding.kind && a.encoding.column == b.encoding.column &&
           a.encoding.min == b.encoding.min && a.encoding.max == b.encoding.max &&
           a.encoding.reference_keyframe == b.encoding.reference_keyframe;
  }
};
struct Play {
  double speed = 0.0;
  friend bool operator==(const Play&, const Play&) = default;
};
struct Pause {
  friend bool operator==(const Pause&, const Pause&) = default;
};
struct RequestPreviews {
  std::size_t thumb_points = 5000;
  std::uint64_t seed = 0;
  friend bool operator==(const RequestPreviews&, const RequestPreviews&) = default;
};
struct RequestSnapshot {
  SnapshotFormat format = SnapshotFormat::csv;
  friend bool operator==(const RequestSnapshot&, const RequestSnapshot&) = default;
};
struct SetFrameBudget {
  double hz = 120.0;
  friend bool operator==(const SetFrameBudget&, const SetFrameBudget&) = default;
};

using ClientBody = std::variant<SetT, SetMode, Drag, RotateResidual, Lasso, LabelSelect, SetEncoding, Play, Pause,
                                RequestPreviews, RequestSnapshot, SetFrameBudget>;

struct ClientMessage {
  std::uint64_t seq = 0;
  ClientBody body;
  friend bool operator==(const ClientMessage&, const ClientMessage&) = default;
};

// ---------------------------------------------------------------------------
// Server -> client

struct KeyframeMeta {
  std::string label;
  std::vector<Loading> loadings;
  friend bool operator==(const KeyframeMeta&, const KeyframeMeta&) = default;
};
struct LabelMeta {
  std::string name;
  LabelColumn::Kind kind = LabelColumn::Kind::categorical;
  std::vector<std::string> dictionary;
  friend bool operator==(const LabelMeta&, const LabelMeta&) = default;
};
struct Hello {
  std::uint32_t protocol_version = kProtocolVersion;
  std::uint64_t n = 0;
  std::uint32_t p = 0;
  std::vector<std::string> dim_names;
  std::vector<KeyframeMeta> keyframes;
  std::vector<double> segment_lengths;
  std::vector<double> keyframe_positions;
  double total_length = 0.0;
  bool cyclic = true;
  BlendMode blend = BlendMode::orthonormal;
  std::vector<LabelMeta> labels;
  friend bool operator==(const Hello&, const Hello&) = default;
};

enum class ChunkEncoding : std::uint32_t { f32 = 0, u16 = 1 };

/// A slice of one column's bytes. Columns 0..p-1 are the embedded
/// dimensions, p.. the label columns in hello order.
struct DataChunk {
  std::uint32_t column = 0;
  ChunkEncoding encoding = ChunkEncoding::f32;
  std::uint64_t offset = 0;
  std::uint64_t total = 0;
  std::string bytes;
  friend bool operator==(const DataChunk&, const DataChunk&) = default;
};
/// The current view: 2p floats, column-major (col0 then col1), plus the
/// per-axis display gain.
struct BasisUpdate {
  double t = 0.0;
  std::array<float, 2> gain{1.0f, 1.0f};
  std::vector<float> values;
  friend bool operator==(const BasisUpdate&, const BasisUpdate&) = default;
};
/// Full mask, or the XOR of changed 64-bit words against the previous mask.
struct SelectionUpdate {
  bool full = true;
  std::uint64_t n = 0;
  std::vector<std::uint64_t> words;                                // full
  std::vector<std::pair<std::uint32_t, std::uint64_t>> delta;      // (word index, xor)
  friend bool operator==(const SelectionUpdate&, const SelectionUpdate&) = default;
};
struct PreviewsPayload {
  std::vector<std::uint32_t> indices;
  std::vector<std::vector<float>> frames;  // per keyframe, interleaved xy
  friend bool operator==(const PreviewsPayload&, const PreviewsPayload&) = default;
};
struct SnapshotPayload {
  SnapshotFormat format = SnapshotFormat::csv;
  std::string bytes;
  friend bool operator==(const SnapshotPayload&, const SnapshotPayload&) = default;
};
struct ErrorMessage {
  std::string code;
  std::string message;
  friend bool operator==(const ErrorMessage&, const ErrorMessage&) = default;
};
struct StateUpdate {
  Mode mode = Mode::guided;
  double t = 0.0;
  bool playing = false;
  double speed = 0.0;
  bool transitioning = false;
  std::uint64_t selected = 0;
  std::string encoding = "none";
  friend bool operator==(const StateUpdate&, const StateUpdate&) = default;
};

using ServerBody = std::variant<Hello, DataChunk, BasisUpdate, SelectionUpdate, PreviewsPayload, SnapshotPayload,
                                ErrorMessage, StateUpdate>;

struct ServerMessage {
  std::uint64_t seq = 0;
  ServerBody body;
  friend bool operator==(const ServerMessage&, const ServerMessage&) = default;
};

// ---------------------------------------------------------------------------
// Encoding

namespace detail {

using nlohmann::json;
using dtour::detail::ByteReader;
using dtour::detail::ByteWriter;

[[noreturn]] inline void violation(const std::string& what) { throw Error(ErrorCode::ProtocolViolation, what); }

template <typename T>
T get(const json& j, const char* key) {
  if (!j.contains(key)) violation(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    violation(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? get<T>(j, key) : fallback;
}

template <typename F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ProtocolViolation) throw;
    violation(e.what());
  }
}

inline Frame binary_frame(FrameKind kind, std::uint64_t seq, const std::string& payload_tail) {
  ByteWriter w;
  for (char c : kMagic) w.put(static_cast<std::uint8_t>(c));
  w.put(static_cast<std::uint32_t>(kind));
  w.put(static_cast<std::uint64_t>(8 + payload_tail.size()));
  w.put(seq);
  w.bytes() += payload_tail;
  return {true, std::move(w.bytes())};
}

inline const char* blend_name(BlendMode b) { return b == BlendMode::affine ? "affine" : "orthonormal"; }

inline BlendMode parse_blend(const std::string& s) {
  if (s == "affine") return BlendMode::affine;
  if (s == "orthonormal") return BlendMode::orthonormal;
  violation("unknown blend '" + s + "'");
}

inline json client_body_json(const ClientBody& body) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SetT>) {
          return {{"type", "set_t"}, {"t", m.t}};
        } else if constexpr (std::is_same_v<T, SetMode>) {
          return {{"type", "set_mode"}, {"mode", std::string(to_string(m.mode))}};
        } else if constexpr (std::is_same_v<T, Drag>) {
          return {{"type", "drag"}, {"dim", m.dim}, {"direction", m.direction}};
        } else if constexpr (std::is_same_v<T, RotateResidual>) {
          return {{"type", "rotate_residual"}, {"angle", m.angle}, {"axis", m.axis}, {"begin", m.begin}};
        } else if constexpr (std::is_same_v<T, Lasso>) {
          json poly = json::array();
          for (const auto& v : m.polygon) poly.push_back({v.x, v.y});
          return {{"type", "lasso"}, {"polygon", poly}, {"combine", std::string(to_string(m.combine))}};
        } else if constexpr (std::is_same_v<T, LabelSelect>) {
          return {{"type", "label_select"},
                  {"column", m.column},
                  {"values", m.values},
                  {"combine", std::string(to_string(m.combine))}};
        } else if constexpr (std::is_same_v<T, SetEncoding>) {
          json j{{"type", "set_encoding"},
                 {"kind", std::string(to_string(m.encoding.kind))},
                 {"column", m.encoding.column},
                 {"reference", m.encoding.reference_keyframe}};
          if (m.encoding.min) j["min"] = *m.encoding.min;
          if (m.encoding.max) j["max"] = *m.encoding.max;
          return j;
        } else if constexpr (std::is_same_v<T, Play>) {
          return {{"type", "play"}, {"speed", m.speed}};
        } else if constexpr (std::is_same_v<T, Pause>) {
          return {{"type", "pause"}};
        } else if constexpr (std::is_same_v<T, RequestPreviews>) {
          return {{"type", "request_previews"}, {"thumb_points", m.thumb_points}, {"seed", m.seed}};
        } else if constexpr (std::is_same_v<T, RequestSnapshot>) {
          return {{"type", "request_snapshot"}, {"format", m.format == SnapshotFormat::csv ? "csv" : "dtc1"}};
        } else {
          static_assert(std::is_same_v<T, SetFrameBudget>);
          return {{"type", "set_frame_budget"}, {"hz", m.hz}};
        }
      },
      body);
}

inline ClientBody client_body_from_json(const json& j) {
  const auto type = get<std::string>(j, "type");
  if (type == "set_t") return SetT{get<double>(j, "t")};
  if (type == "set_mode") return SetMode{guarded([&] { return parse_mode(get<std::string>(j, "mode")); })};
  if (type == "drag") return Drag{get<std::size_t>(j, "dim"), get<std::array<double, 2>>(j, "direction")};
  if (type == "rotate_residual") {
    return RotateResidual{get<double>(j, "angle"), get_or<std::array<double, 2>>(j, "axis", {1.0, 0.0}),
                          get_or<bool>(j, "begin", false)};
  }
  if (type == "lasso") {
    Lasso m;
    for (const auto& v : get<std::vector<std::array<double, 2>>>(j, "polygon")) m.polygon.push_back({v[0], v[1]});
    m.combine = guarded([&] { return parse_combine(get_or<std::string>(j, "combine", "replace")); });
    return m;
  }
  if (type == "label_select") {
    return LabelSelect{get<std::string>(j, "column"), get<std::vector<std::string>>(j, "values"),
                       guarded([&] { return parse_combine(get_or<std::string>(j, "combine", "replace")); })};
  }
  if (type == "set_encoding") {
    SetEncoding m;
    m.encoding.kind = guarded([&] { return parse_encoding_kind(get<std::string>(j, "kind")); });
    m.encoding.column = get_or<std::string>(j, "column", "");
    m.encoding.reference_keyframe = get_or<std::size_t>(j, "reference", 0);
    if (j.contains("min")) m.encoding.min = get<double>(j, "min");
    if (j.contains("max")) m.encoding.max = get<double>(j, "max");
    return m;
  }
  if (type == "play") return Play{get<double>(j, "speed")};
  if (type == "pause") return Pause{};
  if (type == "request_previews") {
    return RequestPreviews{get_or<std::size_t>(j, "thumb_points", 5000), get_or<std::uint64_t>(j, "seed", 0)};
  }
  if (type == "request_snapshot") {
    return RequestSnapshot{guarded([&] { return parse_snapshot_format(get_or<std::string>(j, "format", "csv")); })};
  }
  if (type == "set_frame_budget") return SetFrameBudget{get<double>(j, "hz")};
  violation("unknown message type '" + type + "'");
}

inline json hello_json(const Hello& h) {
  json frames = json::array();
  for (const auto& k : h.keyframes) {
    json loadings = json::array();
    for (const auto& l : k.loadings) loadings.push_back({l.dim, l.weight});
    frames.push_back({{"label", k.label}, {"loadings", loadings}});
  }
  json labels = json::array();
  for (const auto& l : h.labels) {
    labels.push_back({{"name", l.name},
                      {"kind", l.kind == LabelColumn::Kind::categorical ? "categorical" : "continuous"},
                      {"dictionary", l.dictionary}});
  }
  return {{"type", "hello"},
          {"protocol_version", h.protocol_version},
          {"n", h.n},
          {"p", h.p},
          {"k", h.keyframes.size()},
          {"dim_names", h.dim_names},
          {"keyframes", frames},
          {"segment_lengths", h.segment_lengths},
          {"keyframe_positions", h.keyframe_positions},
          {"total_length", h.total_length},
          {"cyclic", h.cyclic},
          {"blend", blend_name(h.blend)},
          {"labels", labels}};
}

inline Hello hello_from_json(const json& j) {
  Hello h;
  h.protocol_version = get<std::uint32_t>(j, "protocol_version");
  h.n = get<std::uint64_t>(j, "n");
  h.p = get<std::uint32_t>(j, "p");
  h.dim_names = get<std::vector<std::string>>(j, "dim_names");
  for (const auto& f : get<json>(j, "keyframes")) {
    KeyframeMeta k{get<std::string>(f, "label"), {}};
    for (const auto& l : get<std::vector<std::pair<std::size_t, double>>>(f, "loadings")) {
      k.loadings.push_back({l.first, l.second});
    }
    h.keyframes.push_back(std::move(k));
  }
  h.segment_lengths = get<std::vector<double>>(j, "segment_lengths");
  h.keyframe_positions = get<std::vector<double>>(j, "keyframe_positions");
  h.total_length = get<double>(j, "total_length");
  h.cyclic = get<bool>(j, "cyclic");
  h.blend = parse_blend(get<std::string>(j, "blend"));
  for (const auto& l : get<json>(j, "labels")) {
    const auto kind = get<std::string>(l, "kind");
    if (kind != "categorical" && kind != "continuous") violation("unknown label kind '" + kind + "'");
    h.labels.push_back({get<std::string>(l, "name"),
                        kind == "categorical" ? LabelColumn::Kind::categorical : LabelColumn::Kind::continuous,
                        get<std::vector<std::string>>(l, "dictionary")});
  }
  return h;
}

inline json state_json(const StateUpdate& s) {
  return {{"type", "state"},       {"mode", std::string(to_string(s.mode))},
          {"t", s.t},              {"playing", s.playing},
          {"speed", s.speed},      {"transitioning", s.transitioning},
          {"selected", s.selected}, {"encoding", s.encoding}};
}

inline StateUpdate state_from_json(const json& j) {
  StateUpdate s;
  s.mode = guarded([&] { return parse_mode(get<std::string>(j, "mode")); });
  s.t = get<double>(j, "t");
  s.playing = get<bool>(j, "playing");
  s.speed = get<double>(j, "speed");
  s.transitioning = get<bool>(j, "transitioning");
  s.selected = get<std::uint64_t>(j, "selected");
  s.encoding = get<std::string>(j, "encoding");
  return s;
}

inline json parse_json_frame(const Frame& f) {
  if (f.binary) violation("expected a text frame");
  try {
    json j = json::parse(f.bytes);
    if (!j.is_object()) violation("control frame is not a JSON object");
    return j;
  } catch (const json::exception& e) {
    violation(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace detail

inline Frame encode(const ClientMessage& m) {
  nlohmann::json j = detail::client_body_json(m.body);
  j["seq"] = m.seq;
  return {false, j.dump()};
}

/// Decodes a client frame; anything malformed throws ProtocolViolation.
inline ClientMessage decode_client(const Frame& f) {
  const auto j = detail::parse_json_frame(f);
  return {detail::get<std::uint64_t>(j, "seq"), detail::client_body_from_json(j)};
}

inline Frame encode(const ServerMessage& m) {
  using detail::ByteWriter;
  return std::visit(
      [&](const auto& b) -> Frame {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, Hello> || std::is_same_v<T, ErrorMessage> || std::is_same_v<T, StateUpdate>) {
          nlohmann::json j;
          if constexpr (std::is_same_v<T, Hello>) j = detail::hello_json(b);
          else if constexpr (std::is_same_v<T, StateUpdate>) j = detail::state_json(b);
          else j = {{"type", "error"}, {"code", b.code}, {"message", b.message}};
          j["seq"] = m.seq;
          return {false, j.dump()};
        } else {
          ByteWriter w;
          FrameKind kind{};
          if constexpr (std::is_same_v<T, DataChunk>) {
            kind = FrameKind::data_chunk;
            w.put(b.column);
            w.put(static_cast<std::uint32_t>(b.encoding));
            w.put(b.offset);
            w.put(b.total);
            w.bytes() += b.bytes;
          } else if constexpr (std::is_same_v<T, BasisUpdate>) {
            kind = FrameKind::basis;
            w.put(b.t);
            w.put(b.gain[0]);
            w.put(b.gain[1]);
            w.put_array(b.values);
          } else if constexpr (std::is_same_v<T, SelectionUpdate>) {
            kind = FrameKind::selection;
            w.put(static_cast<std::uint32_t>(b.full ? 0 : 1));
            w.put(static_cast<std::uint32_t>(0));
            w.put(b.n);
            if (b.full) {
              w.put_array(b.words);
            } else {
              for (const auto& [index, bits] : b.delta) {
                w.put(index);
                w.put(bits);
              }
            }
          } else if constexpr (std::is_same_v<T, PreviewsPayload>) {
            kind = FrameKind::previews;
            w.put(static_cast<std::uint32_t>(b.frames.size()));
            w.put(static_cast<std::uint32_t>(b.indices.size()));
            w.put_array(b.indices);
            for (const auto& f : b.frames) {
              if (f.size() != 2 * b.indices.size()) {
                throw Error(ErrorCode::InvalidArgument, "preview frame size differs from index count");
              }
              w.put_array(f);
            }
          } else {
            static_assert(std::is_same_v<T, SnapshotPayload>);
            kind = FrameKind::snapshot;
            w.put(static_cast<std::uint32_t>(b.format == SnapshotFormat::csv ? 0 : 1));
            w.put(static_cast<std::uint32_t>(0));
            w.bytes() += b.bytes;
          }
          return detail::binary_frame(kind, m.seq, w.bytes());
        }
      },
      m.body);
}

/// Decodes a server frame; malformed input throws ProtocolViolation.
inline ServerMessage decode_server(const Frame& f) {
  using detail::violation;
  if (!f.binary) {
    const auto j = detail::parse_json_frame(f);
    const auto seq = detail::get<std::uint64_t>(j, "seq");
    const auto type = detail::get<std::string>(j, "type");
    if (type == "hello") return {seq, detail::hello_from_json(j)};
    if (type == "state") return {seq, detail::state_from_json(j)};
    if (type == "error") {
      return {seq, ErrorMessage{detail::get<std::string>(j, "code"), detail::get<std::string>(j, "message")}};
    }
    violation("unknown server message type '" + type + "'");
  }
  return detail::guarded([&]() -> ServerMessage {
    detail::ByteReader r(f.bytes, ErrorCode::ProtocolViolation);
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.get<std::uint8_t>());
    if (std::memcmp(magic, kMagic, 4) != 0) violation("bad frame magic");
    const auto kind = static_cast<FrameKind>(r.get<std::uint32_t>());
    const auto length = r.get<std::uint64_t>();
    if (length != r.remaining()) violation("frame length field does not match frame size");
    ServerMessage m;
    m.seq = r.get<std::uint64_t>();
    switch (kind) {
      case FrameKind::data_chunk: {
        DataChunk c;
        c.column = r.get<std::uint32_t>();
        const auto enc = r.get<std::uint32_t>();
        if (enc > 1) violation("unknown chunk encoding");
        c.encoding = static_cast<ChunkEncoding>(enc);
        c.offset = r.get<std::uint64_t>();
        c.total = r.get<std::uint64_t>();
        c.bytes.assign(f.bytes, r.position(), r.remaining());
        if (c.offset + c.bytes.size() > c.total) violation("chunk extends past its column");
        m.body = std::move(c);
        break;
      }
      case FrameKind::basis: {
        BasisUpdate b;
        b.t = r.get<double>();
        b.gain = {r.get<float>(), r.get<float>()};
        if (r.remaining() % 8 != 0) violation("basis payload is not 2p floats");
        b.values = r.get_array<float>(r.remaining() / 4);
        m.body = std::move(b);
        break;
      }
      case FrameKind::selection: {
        SelectionUpdate s;
        const auto mode = r.get<std::uint32_t>();
        if (mode > 1) violation("unknown selection encoding");
        r.get<std::uint32_t>();
        s.full = mode == 0;
        s.n = r.get<std::uint64_t>();
        if (s.full) {
          if (r.remaining() != (s.n + 63) / 64 * 8) violation("selection mask length");
          s.words = r.get_array<std::uint64_t>(r.remaining() / 8);
        } else {
          if (r.remaining() % 12 != 0) violation("selection delta length");
          while (r.remaining() > 0) {
            const auto index = r.get<std::uint32_t>();
            s.delta.emplace_back(index, r.get<std::uint64_t>());
          }
        }
        m.body = std::move(s);
        break;
      }
      case FrameKind::previews: {
        PreviewsPayload pv;
        const auto k = r.get<std::uint32_t>();
        const auto count = r.get<std::uint32_t>();
        pv.indices = r.get_array<std::uint32_t>(count);
        for (std::uint32_t i = 0; i < k; ++i) pv.frames.push_back(r.get_array<float>(2 * std::size_t{count}));
        if (r.remaining() != 0) violation("trailing bytes in previews frame");
        m.body = std::move(pv);
        break;
      }
      case FrameKind::snapshot: {
        SnapshotPayload s;
        const auto fmt = r.get<std::uint32_t>();
        if (fmt > 1) violation("unknown snapshot format");
        r.get<std::uint32_t>();
        s.format = fmt == 0 ? SnapshotFormat::csv : SnapshotFormat::dtc1;
        s.bytes.assign(f.bytes, r.position(), r.remaining());
        m.body = std::move(s);
        break;
      }
      default:
        violation("unknown binary frame kind " + std::to_string(static_cast<std::uint32_t>(kind)));
    }
    return m;
  });
}

// ---------------------------------------------------------------------------
// Column streaming

/// Splits one column's bytes into chunks of at most max_chunk bytes.
inline std::vector<DataChunk> chunk_column(std::uint32_t column, ChunkEncoding encoding, std::string_view bytes,
                                           std::size_t max_chunk = kMaxChunkBytes) {
  if (max_chunk == 0) throw Error(ErrorCode::InvalidArgument, "chunk size must be positive");
  std::vector<DataChunk> out;
  for (std::size_t off = 0; off < bytes.size() || (off == 0 && out.empty()); off += max_chunk) {
    const std::size_t len = std::min(max_chunk, bytes.size() - off);
    out.push_back({column, encoding, off, bytes.size(), std::string(bytes.substr(off, len))});
    if (bytes.empty()) break;
  }
  return out;
}

/// Little-endian bytes of a float column.
inline std::string column_bytes(const std::vector<float>& values) {
  dtour::detail::ByteWriter w;
  w.put_array(values);
  return std::move(w.bytes());
}

inline std::string column_bytes(const std::vector<std::uint16_t>& codes) {
  dtour::detail::ByteWriter w;
  w.put_array(codes);
  return std::move(w.bytes());
}

/// Reassembles chunked columns; chunks may arrive in any order but must
/// not overlap.
class ChunkAssembler {
 public:
  /// Returns true when this chunk completes its column.
  bool add(const DataChunk& c) {
    auto& col = columns_[c.column];
    if (col.received == 0 && col.bytes.empty()) {
      col.bytes.assign(c.total, '\0');
      col.encoding = c.encoding;
    }
    if (c.total != col.bytes.size() || c.encoding != col.encoding) {
      throw Error(ErrorCode::ProtocolViolation, "chunk disagrees with earlier chunks of its column");
    }
    if (c.offset + c.bytes.size() > c.total) throw Error(ErrorCode::ProtocolViolation, "chunk past end of column");
    std::memcpy(col.bytes.data() + c.offset, c.bytes.data(), c.bytes.size());
    col.received += c.bytes.size();
    if (col.received > col.bytes.size()) throw Error(ErrorCode::ProtocolViolation, "overlapping chunks");
    return col.received == col.bytes.size();
  }

  bool complete(std::uint32_t column) const {
    const auto it = columns_.find(column);
    return it != columns_.end() && it->second.received == it->second.bytes.size();
  }

  const std::string& bytes(std::uint32_t column) const { return columns_.at(column).bytes; }

  std::vector<float> floats(std::uint32_t column) const {
    const auto& b = bytes(column);
    dtour::detail::ByteReader r(b, ErrorCode::ProtocolViolation);
    return r.get_array<float>(b.size() / 4);
  }

 private:
  struct Column {
    std::string bytes;
    std::size_t received = 0;
    ChunkEncoding encoding = ChunkEncoding::f32;
  };
  std::map<std::uint32_t, Column> columns_;
};

// ---------------------------------------------------------------------------
// Message builders

inline Hello make_hello(const Dataset& ds, const TourPath& path) {
  Hello h;
  h.n = ds.n_rows();
  h.p = static_cast<std::uint32_t>(ds.n_dims());
  h.dim_names = ds.dim_names;
  for (const auto& k : path.sequence().keyframes) h.keyframes.push_back({k.label, k.loadings});
  h.segment_lengths = path.segment_lengths();
  h.keyframe_positions = path.keyframe_positions();
  h.total_length = path.total_length();
  h.cyclic = path.cyclic();
  h.blend = path.blend();
  for (const auto& l : ds.labels) h.labels.push_back({l.name, l.kind, l.dictionary});
  return h;
}

inline BasisUpdate make_basis_update(const Basis& basis, double t, std::array<double, 2> gain) {
  BasisUpdate b;
  b.t = t;
  b.gain = {static_cast<float>(gain[0]), static_cast<float>(gain[1])};
  b.values.reserve(2 * basis.dims());
  for (std::size_t c = 0; c < 2; ++c) {
    for (double v : basis.col(c)) b.values.push_back(static_cast<float>(v));
  }
  return b;
}

/// The basis carried by an update, in double precision.
inline PlaneMatrix basis_matrix(const BasisUpdate& b) {
  const std::size_t p = b.values.size() / 2;
  PlaneMatrix m(p);
  for (std::size_t i = 0; i < p; ++i) {
    m(i, 0) = b.values[i];
    m(i, 1) = b.values[p + i];
  }
  return m;
}

/// Full mask when there is no previous mask, else the word-level XOR delta,
/// whichever is smaller.
inline SelectionUpdate make_selection_update(const Selection& now, const Selection* before) {
  SelectionUpdate full{true, now.size(), now.words(), {}};
  if (before == nullptr || before->size() != now.size()) return full;
  SelectionUpdate delta{false, now.size(), {}, {}};
  for (std::size_t w = 0; w < now.words().size(); ++w) {
    const std::uint64_t x = now.words()[w] ^ before->words()[w];
    if (x != 0) delta.delta.emplace_back(static_cast<std::uint32_t>(w), x);
  }
  return delta.delta.size() * 12 < full.words.size() * 8 ? delta : full;
}

/// Applies an update to the client-side mask.
inline void apply_selection_update(Selection& mask, const SelectionUpdate& u) {
  if (u.full) {
    mask = Selection(u.n);
    if (u.words.size() != mask.words().size()) throw Error(ErrorCode::ProtocolViolation, "selection mask length");
    mask.words() = u.words;
    return;
  }
  if (mask.size() != u.n) throw Error(ErrorCode::ProtocolViolation, "selection delta against a different mask");
  for (const auto& [index, bits] : u.delta) {
    if (index >= mask.words().size()) throw Error(ErrorCode::ProtocolViolation, "selection word out of range");
    mask.words()[index] ^= bits;
  }
}

}  // namespace dtour::protocol
