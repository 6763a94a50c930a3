#pragma once

// Local control server for a stream Session. Clients connect over TCP and
// exchange newline-delimited JSON; a connection that opens with an HTTP GET
// upgrade request speaks the same messages as WebSocket text frames instead.
// POSIX only.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <json.hpp>

#include "purrbeat/error.hpp"
#include "purrbeat/stream.hpp"

namespace purrbeat::stream {

namespace ws {

inline constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
inline constexpr std::size_t kMaxMessage = 1u << 20;

enum Opcode : std::uint8_t { continuation = 0x0, text = 0x1, binary = 0x2, close = 0x8, ping = 0x9, pong = 0xA };

/// Sec-WebSocket-Accept value for a client key.
inline std::string accept_key(std::string_view client_key) {
    const std::string in = std::string(client_key) + std::string(kGuid);
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(in.data()), in.size(), digest);
    unsigned char out[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
    const int n = EVP_EncodeBlock(out, digest, SHA_DIGEST_LENGTH);
    return std::string(reinterpret_cast<char*>(out), static_cast<std::size_t>(n));
}

/// Server-to-client frame (never masked).
inline std::string encode_frame(Opcode op, std::string_view payload) {
    std::string f;
    f.push_back(static_cast<char>(0x80 | op));
    const std::size_t n = payload.size();
    if (n < 126) {
        f.push_back(static_cast<char>(n));
    } else if (n <= 0xFFFF) {
        f.push_back(126);
        f.push_back(static_cast<char>(n >> 8));
        f.push_back(static_cast<char>(n & 0xFF));
    } else {
        f.push_back(127);
        for (int i = 7; i >= 0; --i) f.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xFF));
    }
    f.append(payload);
    return f;
}

/// Client frame encoder, masked as clients must; used by tests and tools.
inline std::string encode_client_frame(Opcode op, std::string_view payload, std::uint32_t mask_key) {
    std::string f = encode_frame(op, payload);
    const std::size_t header = f.size() - payload.size();
    f[1] = static_cast<char>(f[1] | 0x80);
    const char mask[4] = {static_cast<char>(mask_key >> 24), static_cast<char>(mask_key >> 16),
                          static_cast<char>(mask_key >> 8), static_cast<char>(mask_key)};
    std::string out = f.substr(0, header);
    out.append(mask, 4);
    for (std::size_t i = 0; i < payload.size(); ++i) out.push_back(static_cast<char>(payload[i] ^ mask[i % 4]));
    return out;
}

struct Message {
    Opcode opcode = text;
    std::string payload;
};

/// Incremental decoder for one direction of a connection. Reassembles
/// fragmented messages; control frames may arrive between fragments.
class Decoder {
public:
    explicit Decoder(bool expect_masked = true) : expect_masked_(expect_masked) {}

    void feed(std::string_view bytes) { buf_.append(bytes); }

    /// Next complete message, or nothing if more bytes are needed.
    std::optional<Message> next() {
        while (true) {
            if (buf_.size() < 2) return std::nullopt;
            const auto b0 = static_cast<unsigned char>(buf_[0]);
            const auto b1 = static_cast<unsigned char>(buf_[1]);
            const bool fin = b0 & 0x80;
            const auto op = static_cast<Opcode>(b0 & 0x0F);
            const bool masked = b1 & 0x80;
            if (b0 & 0x70) throw ParseError("websocket: reserved bits set", consumed_);
            if (masked != expect_masked_) throw ParseError("websocket: unexpected masking", consumed_ + 1);
            std::uint64_t len = b1 & 0x7F;
            std::size_t pos = 2;
            if (len == 126) {
                if (buf_.size() < 4) return std::nullopt;
                len = (static_cast<unsigned char>(buf_[2]) << 8) | static_cast<unsigned char>(buf_[3]);
                pos = 4;
            } else if (len == 127) {
                if (buf_.size() < 10) return std::nullopt;
                len = 0;
                for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<unsigned char>(buf_[2 + i]);
                pos = 10;
            }
            if (len > kMaxMessage) throw ParseError("websocket: frame too large", consumed_);
            const std::size_t mask_at = pos;
            if (masked) pos += 4;
            if (buf_.size() < pos + len) return std::nullopt;
            std::string payload = buf_.substr(pos, len);
            if (masked)
                for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ buf_[mask_at + i % 4]);
            buf_.erase(0, pos + len);
            consumed_ += pos + len;

            if (op >= close) {
                if (!fin || len > 125) throw ParseError("websocket: malformed control frame", consumed_);
                return Message{op, std::move(payload)};
            }
            if (op == continuation) {
                if (!partial_) throw ParseError("websocket: continuation without a message", consumed_);
                partial_->payload += payload;
            } else {
                if (partial_) throw ParseError("websocket: new message inside a fragmented one", consumed_);
                partial_ = Message{op, std::move(payload)};
            }
            if (partial_->payload.size() > kMaxMessage) throw ParseError("websocket: message too large", consumed_);
            if (fin) {
                auto m = std::move(*partial_);
                partial_.reset();
                return m;
            }
        }
    }

private:
    bool expect_masked_;
    std::string buf_;
    std::optional<Message> partial_;
    std::size_t consumed_ = 0;
};

struct UpgradeRequest {
    std::string path;
    std::string key;
};

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

/// Parses the HTTP request head (everything before the blank line).
inline UpgradeRequest parse_upgrade(std::string_view head) {
    UpgradeRequest req;
    const auto line_end = head.find("\r\n");
    const std::string_view first = head.substr(0, line_end);
    if (first.substr(0, 4) != "GET ") throw ParseError("http: expected GET", 0);
    const auto sp = first.find(' ', 4);
    req.path = std::string(first.substr(4, sp == std::string_view::npos ? std::string_view::npos : sp - 4));
    bool upgrade = false;
    std::size_t pos = line_end == std::string_view::npos ? head.size() : line_end + 2;
    while (pos < head.size()) {
        auto e = head.find("\r\n", pos);
        if (e == std::string_view::npos) e = head.size();
        const std::string_view line = head.substr(pos, e - pos);
        const auto colon = line.find(':');
        if (colon == std::string_view::npos) throw ParseError("http: malformed header line", pos);
        const std::string name = lower(std::string(line.substr(0, colon)));
        std::string value(line.substr(colon + 1));
        value.erase(0, value.find_first_not_of(" \t"));
        value.erase(value.find_last_not_of(" \t") + 1);
        if (name == "upgrade") upgrade = lower(value) == "websocket";
        if (name == "sec-websocket-key") req.key = value;
        pos = e + 2;
    }
    if (!upgrade) throw ParseError("http: not a websocket upgrade", 0);
    if (req.key.empty()) throw ParseError("http: missing Sec-WebSocket-Key", 0);
    return req;
}

inline std::string upgrade_response(const UpgradeRequest& req) {
    return "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: " +
           accept_key(req.key) + "\r\n\r\n";
}

}  // namespace ws

struct ServerOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;  // 0 picks a free port
    RenderLoop::Pace pace = RenderLoop::Pace::realtime;
    int event_poll_ms = 10;
};

class Server {
public:
    Server(Session& session, ServerOptions opt = {}) : session_(session), opt_(std::move(opt)), loop_(session, opt_.pace) {}
    ~Server() { stop(); }

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    void start() {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw IoError("socket() failed");
        const int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(opt_.port);
        if (::inet_pton(AF_INET, opt_.host.c_str(), &addr.sin_addr) != 1) throw ValidationError("bad host " + opt_.host);
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
            ::close(listen_fd_);
            listen_fd_ = -1;
            throw IoError("cannot listen on " + opt_.host + ":" + std::to_string(opt_.port));
        }
        socklen_t len = sizeof addr;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        running_ = true;
        loop_.start();
        accept_thread_ = std::thread([this] { accept_loop(); });
        pump_thread_ = std::thread([this] { pump_events(); });
    }

    void stop() {
        if (!running_.exchange(false)) return;
        if (accept_thread_.joinable()) accept_thread_.join();
        if (pump_thread_.joinable()) pump_thread_.join();
        std::vector<std::thread> threads;
        {
            std::lock_guard lock(clients_mu_);
            for (auto& c : clients_) ::shutdown(c->fd, SHUT_RDWR);
            threads.swap(client_threads_);
        }
        for (auto& t : threads)
            if (t.joinable()) t.join();
        loop_.stop();
        ::close(listen_fd_);
        listen_fd_ = -1;
    }

    std::uint16_t port() const { return port_; }
    bool running() const { return running_; }

private:
    struct Client {
        int fd = -1;
        bool websocket = false;
        std::atomic<bool> meters{false};
        std::atomic<bool> open{true};
        std::atomic<bool> ready{false};  // protocol settled; pushed events may be sent
        std::mutex send_mu;

        void send_message(const std::string& text) {
            const std::string out = websocket ? ws::encode_frame(ws::text, text) : text + "\n";
            send_raw(out);
        }
        void send_raw(const std::string& out) {
            std::lock_guard lock(send_mu);
            std::size_t off = 0;
            while (off < out.size() && open) {
                const auto n = ::send(fd, out.data() + off, out.size() - off, MSG_NOSIGNAL);
                if (n <= 0) {
                    open = false;
                    break;
                }
                off += static_cast<std::size_t>(n);
            }
        }
    };

    void accept_loop() {
        while (running_) {
            pollfd p{listen_fd_, POLLIN, 0};
            if (::poll(&p, 1, 100) <= 0) continue;
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) continue;
            auto c = std::make_shared<Client>();
            c->fd = fd;
            std::lock_guard lock(clients_mu_);
            clients_.push_back(c);
            client_threads_.emplace_back([this, c] { serve(c); });
        }
    }

    nlohmann::json control(const std::string& text, Client& c) {
        nlohmann::json msg;
        try {
            msg = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            return {{"v", kProtocolVersion}, {"id", nullptr}, {"ok", false},
                    {"error", {{"code", code::kBadRequest},
                               {"message", std::string("invalid JSON at byte ") + std::to_string(e.byte)}}}};
        }
        nlohmann::json reply;
        {
            std::lock_guard lock(control_mu_);
            reply = session_.handle_control(msg);
        }
        if (reply.value("ok", false) && reply.value("op", std::string()) == "subscribe_meters")
            c.meters = reply.at("result").value("enabled", true);
        return reply;
    }

    void serve(std::shared_ptr<Client> c) {
        std::string buf;
        ws::Decoder dec;
        bool decided = false;
        char chunk[4096];
        while (running_ && c->open) {
            pollfd p{c->fd, POLLIN, 0};
            const int r = ::poll(&p, 1, 100);
            if (r == 0) continue;
            if (r < 0) break;
            const auto n = ::recv(c->fd, chunk, sizeof chunk, 0);
            if (n <= 0) break;
            try {
                if (c->websocket) {
                    dec.feed(std::string_view(chunk, static_cast<std::size_t>(n)));
                    if (!handle_frames(*c, dec)) break;
                    continue;
                }
                buf.append(chunk, static_cast<std::size_t>(n));
                if (!decided && buf.size() >= 4) {
                    decided = true;
                    c->websocket = buf.compare(0, 4, "GET ") == 0;
                    if (!c->websocket) c->ready = true;
                }
                if (c->websocket) {
                    const auto end = buf.find("\r\n\r\n");
                    if (end == std::string::npos) {
                        if (buf.size() > 16384) break;
                        continue;
                    }
                    const auto req = ws::parse_upgrade(std::string_view(buf).substr(0, end));
                    c->send_raw(ws::upgrade_response(req));
                    c->ready = true;
                    dec.feed(std::string_view(buf).substr(end + 4));
                    buf.clear();
                    if (!handle_frames(*c, dec)) break;
                    continue;
                }
                std::size_t nl;
                while ((nl = buf.find('\n')) != std::string::npos) {
                    std::string line = buf.substr(0, nl);
                    buf.erase(0, nl + 1);
                    if (!line.empty() && line.back() == '\r') line.pop_back();
                    if (line.find_first_not_of(" \t") == std::string::npos) continue;
                    c->send_message(control(line, *c).dump());
                }
                if (buf.size() > ws::kMaxMessage) break;
            } catch (const ParseError& e) {
                if (c->websocket && decided && buf.empty()) {
                    c->send_raw(ws::encode_frame(ws::close, "\x03\xea"));  // 1002 protocol error
                } else {
                    c->send_raw("HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
                }
                break;
            }
        }
        c->open = false;
        ::close(c->fd);
        std::lock_guard lock(clients_mu_);
        clients_.erase(std::remove(clients_.begin(), clients_.end(), c), clients_.end());
    }

    bool handle_frames(Client& c, ws::Decoder& dec) {
        while (auto m = dec.next()) {
            switch (m->opcode) {
                case ws::text: c.send_message(control(m->payload, c).dump()); break;
                case ws::ping: c.send_raw(ws::encode_frame(ws::pong, m->payload)); break;
                case ws::close: c.send_raw(ws::encode_frame(ws::close, m->payload.substr(0, 2))); return false;
                case ws::binary:
                    c.send_raw(ws::encode_frame(ws::close, "\x03\xeb"));  // 1003 unsupported data
                    return false;
                default: break;
            }
        }
        return true;
    }

    void pump_events() {
        while (running_) {
            std::this_thread::sleep_for(std::chrono::milliseconds(opt_.event_poll_ms));
            const auto events = session_.take_events();
            if (events.empty()) continue;
            std::vector<std::shared_ptr<Client>> targets;
            {
                std::lock_guard lock(clients_mu_);
                targets = clients_;
            }
            for (const auto& ev : events) {
                const bool is_meter = ev.value("event", std::string()) == "meter";
                const std::string text = ev.dump();
                for (auto& c : targets)
                    if (c->open && c->ready && (!is_meter || c->meters)) c->send_message(text);
            }
        }
    }

    Session& session_;
    ServerOptions opt_;
    RenderLoop loop_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::mutex control_mu_;
    std::mutex clients_mu_;
    std::vector<std::shared_ptr<Client>> clients_;
    std::vector<std::thread> client_threads_;
    std::thread accept_thread_;
    std::thread pump_thread_;
};

}  // namespace purrbeat::stream
