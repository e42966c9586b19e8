#pragma once

// Framed binary protocol between the edge orchestrator and stage-1 workers.
//
//   frame   = u32 LE payload length | payload            (length <= 64 MiB)
//   payload = u8 msg_type | fields in declared order, little-endian
//
//   1 HELLO      u16 version | u64 weight_hash
//   2 HELLO_ACK  u16 version | u64 weight_hash | u16 max_h | u16 max_w | u16 embed_dim
//   3 TASK       u64 task_id | u16 window_index | u16 layer_start | u16 layer_end |
//                u64 weight_hash | u16 h | u16 w | u16 embed_dim | f32[h*w*embed_dim]
//   4 RESULT     u64 task_id | u16 window_index | u16 h | u16 w | u16 embed_dim | f32[...]
//   5 ERROR      u64 task_id | u16 code | u16 len | UTF-8 message

#include <pedvit/bytes.hpp>
#include <pedvit/errors.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace pedvit::wire {

inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 64u * 1024u * 1024u;
inline constexpr std::uint16_t kDefaultPort = 7461;

enum class MsgType : std::uint8_t { hello = 1, hello_ack = 2, task = 3, result = 4, error = 5 };

enum class ErrorCode : std::uint16_t { model_skew = 1, shape = 2, version = 3, internal = 4 };

// Truncated or inconsistent frame bytes.
class FramingError : public FormatError {
public:
    using FormatError::FormatError;
};

class LimitError : public FormatError {
public:
    using FormatError::FormatError;
};

class ProtocolError : public FormatError {
public:
    using FormatError::FormatError;
};

struct Hello {
    std::uint16_t version = kProtocolVersion;
    std::uint64_t weight_hash = 0;
    friend bool operator==(const Hello&, const Hello&) = default;
};

struct HelloAck {
    std::uint16_t version = kProtocolVersion;
    std::uint64_t weight_hash = 0;
    std::uint16_t max_h = 0;
    std::uint16_t max_w = 0;
    std::uint16_t embed_dim = 0;
    friend bool operator==(const HelloAck&, const HelloAck&) = default;
};

struct TaskMsg {
    std::uint64_t task_id = 0;
    std::uint16_t window_index = 0;
    std::uint16_t layer_start = 0;
    std::uint16_t layer_end = 0;
    std::uint64_t weight_hash = 0;
    std::uint16_t h = 0, w = 0, embed_dim = 0;
    std::vector<float> tensor;
    friend bool operator==(const TaskMsg&, const TaskMsg&) = default;
};

struct ResultMsg {
    std::uint64_t task_id = 0;
    std::uint16_t window_index = 0;
    std::uint16_t h = 0, w = 0, embed_dim = 0;
    std::vector<float> tensor;
    friend bool operator==(const ResultMsg&, const ResultMsg&) = default;
};

struct ErrorMsg {
    std::uint64_t task_id = 0;
    ErrorCode code = ErrorCode::internal;
    std::string message;
    friend bool operator==(const ErrorMsg&, const ErrorMsg&) = default;
};

using Message = std::variant<Hello, HelloAck, TaskMsg, ResultMsg, ErrorMsg>;

namespace detail {

inline std::size_t tensor_len(std::uint16_t h, std::uint16_t w, std::uint16_t d) {
    return static_cast<std::size_t>(h) * w * d;
}

inline void check_tensor(std::uint16_t h, std::uint16_t w, std::uint16_t d, const std::vector<float>& t) {
    if (t.size() != tensor_len(h, w, d)) throw ProtocolError("tensor payload does not match dims");
}

} // namespace detail

inline std::vector<std::uint8_t> encode_payload(const Message& msg) {
    ByteWriter b;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Hello>) {
                b.u8(static_cast<std::uint8_t>(MsgType::hello));
                b.u16(m.version);
                b.u64(m.weight_hash);
            } else if constexpr (std::is_same_v<T, HelloAck>) {
                b.u8(static_cast<std::uint8_t>(MsgType::hello_ack));
                b.u16(m.version);
                b.u64(m.weight_hash);
                b.u16(m.max_h);
                b.u16(m.max_w);
                b.u16(m.embed_dim);
            } else if constexpr (std::is_same_v<T, TaskMsg>) {
                detail::check_tensor(m.h, m.w, m.embed_dim, m.tensor);
                b.u8(static_cast<std::uint8_t>(MsgType::task));
                b.u64(m.task_id);
                b.u16(m.window_index);
                b.u16(m.layer_start);
                b.u16(m.layer_end);
                b.u64(m.weight_hash);
                b.u16(m.h);
                b.u16(m.w);
                b.u16(m.embed_dim);
                b.f32s(m.tensor);
            } else if constexpr (std::is_same_v<T, ResultMsg>) {
                detail::check_tensor(m.h, m.w, m.embed_dim, m.tensor);
                b.u8(static_cast<std::uint8_t>(MsgType::result));
                b.u64(m.task_id);
                b.u16(m.window_index);
                b.u16(m.h);
                b.u16(m.w);
                b.u16(m.embed_dim);
                b.f32s(m.tensor);
            } else {
                if (m.message.size() > 0xffff) throw ProtocolError("error message too long");
                b.u8(static_cast<std::uint8_t>(MsgType::error));
                b.u64(m.task_id);
                b.u16(static_cast<std::uint16_t>(m.code));
                b.u16(static_cast<std::uint16_t>(m.message.size()));
                b.bytes(m.message);
            }
        },
        msg);
    if (b.buffer().size() > kMaxFrameBytes) throw LimitError("message exceeds frame limit");
    return b.take();
}

inline Message decode_payload(std::span<const std::uint8_t> payload) {
    if (payload.empty()) throw FramingError("empty payload");
    if (payload.size() > kMaxFrameBytes) throw LimitError("payload exceeds frame limit");
    ByteReader r(payload);
    Message out;
    try {
        switch (static_cast<MsgType>(r.u8())) {
        case MsgType::hello: {
            Hello m;
            m.version = r.u16();
            m.weight_hash = r.u64();
            out = m;
            break;
        }
        case MsgType::hello_ack: {
            HelloAck m;
            m.version = r.u16();
            m.weight_hash = r.u64();
            m.max_h = r.u16();
            m.max_w = r.u16();
            m.embed_dim = r.u16();
            out = m;
            break;
        }
        case MsgType::task: {
            TaskMsg m;
            m.task_id = r.u64();
            m.window_index = r.u16();
            m.layer_start = r.u16();
            m.layer_end = r.u16();
            m.weight_hash = r.u64();
            m.h = r.u16();
            m.w = r.u16();
            m.embed_dim = r.u16();
            m.tensor = r.f32s(detail::tensor_len(m.h, m.w, m.embed_dim));
            out = std::move(m);
            break;
        }
        case MsgType::result: {
            ResultMsg m;
            m.task_id = r.u64();
            m.window_index = r.u16();
            m.h = r.u16();
            m.w = r.u16();
            m.embed_dim = r.u16();
            m.tensor = r.f32s(detail::tensor_len(m.h, m.w, m.embed_dim));
            out = std::move(m);
            break;
        }
        case MsgType::error: {
            ErrorMsg m;
            m.task_id = r.u64();
            m.code = static_cast<ErrorCode>(r.u16());
            m.message = r.str(r.u16());
            out = std::move(m);
            break;
        }
        default:
            throw ProtocolError("unknown message type " + std::to_string(payload[0]));
        }
    } catch (const ProtocolError&) {
        throw;
    } catch (const FormatError& e) {
        throw FramingError(std::string("truncated message: ") + e.what());
    }
    if (r.remaining() != 0) throw FramingError("trailing bytes after message");
    return out;
}

inline std::vector<std::uint8_t> encode_frame(const Message& msg) {
    const auto payload = encode_payload(msg);
    ByteWriter b;
    b.u32(static_cast<std::uint32_t>(payload.size()));
    b.raw(payload.data(), payload.size());
    return b.take();
}

// Decodes exactly one frame occupying the whole buffer.
inline Message decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw FramingError("truncated frame header");
    ByteReader r(bytes);
    const std::uint32_t len = r.u32();
    if (len > kMaxFrameBytes) throw LimitError("frame length " + std::to_string(len) + " exceeds 64 MiB");
    if (bytes.size() - 4 < len) throw FramingError("truncated frame payload");
    if (bytes.size() - 4 > len) throw FramingError("trailing bytes after frame");
    return decode_payload(bytes.subspan(4, len));
}

// Incremental decoder for a byte stream: feed bytes, pop complete messages.
class FrameDecoder {
public:
    void feed(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

    std::optional<Message> next() {
        if (buf_.size() < 4) return std::nullopt;
        ByteReader r(buf_);
        const std::uint32_t len = r.u32();
        if (len > kMaxFrameBytes) throw LimitError("frame length exceeds 64 MiB");
        if (buf_.size() - 4 < len) return std::nullopt;
        Message m = decode_payload(std::span(buf_).subspan(4, len));
        buf_.erase(buf_.begin(), buf_.begin() + 4 + len);
        return m;
    }

    std::size_t buffered() const noexcept { return buf_.size(); }

private:
    std::vector<std::uint8_t> buf_;
};

} // namespace pedvit::wire
