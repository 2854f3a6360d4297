#pragma once

#include <algorithm>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace stargraph {

// ---------------------------------------------------------------------------
// Logging. Level comes from the SG_LOG environment variable
// (error|warn|info|debug), default info.
// ---------------------------------------------------------------------------

enum class LogLevel : int { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("SG_LOG");
        if (!env) return LogLevel::Info;
        std::string s(env);
        if (s == "error") return LogLevel::Error;
        if (s == "warn") return LogLevel::Warn;
        if (s == "debug") return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

inline void log_at(LogLevel lvl, const char* tag, const char* fmt, va_list ap) {
    if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
    std::fprintf(stderr, "[%s] ", tag);
    std::vfprintf(stderr, fmt, ap);
    std::fputc('\n', stderr);
}

inline void log_info(const char* fmt, ...) {
    va_list ap;
    va_start(ap, fmt);
    log_at(LogLevel::Info, "info", fmt, ap);
    va_end(ap);
}

inline void log_warn(const char* fmt, ...) {
    va_list ap;
    va_start(ap, fmt);
    log_at(LogLevel::Warn, "warn", fmt, ap);
    va_end(ap);
}

inline void log_debug(const char* fmt, ...) {
    va_list ap;
    va_start(ap, fmt);
    log_at(LogLevel::Debug, "debug", fmt, ap);
    va_end(ap);
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

// ---------------------------------------------------------------------------
// FNV-1a 64-bit checksum
// ---------------------------------------------------------------------------

struct Fnv1a {
    std::uint64_t state = 0xcbf29ce484222325ull;

    void update(const void* bytes, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < n; ++i) {
            state ^= p[i];
            state *= 0x100000001b3ull;
        }
    }
    template <typename T>
    void update_value(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        update(&v, sizeof(T));
    }
    std::uint64_t digest() const { return state; }
};

inline std::uint64_t checksum_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open file: " + path);
    Fnv1a h;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) h.update(buf, static_cast<std::size_t>(in.gcount()));
    return h.digest();
}

// ---------------------------------------------------------------------------
// Deterministic RNG helpers. std::mt19937_64 streams are serializable via
// operator<< / operator>>, which the checkpoint format relies on; all draws
// go through these helpers so no hidden distribution state exists.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

// Unbiased integer in [0, n) by rejection.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
    if (n == 0) fail("uniform_below: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

// Uniform double in [0, 1).
inline double uniform_real(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Uniform double in [lo, hi).
inline double uniform_real(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform_real(rng); }

inline std::string rng_state_string(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

inline void rng_set_state(Rng& rng, const std::string& s) {
    std::istringstream is(s);
    is >> rng;
    if (!is) fail("invalid rng state string");
}

// ---------------------------------------------------------------------------
// parallel_for: static chunking over [0, n). threads<=1 runs inline. Callers
// must only write to disjoint per-index slots, which keeps results identical
// for every thread count.
// ---------------------------------------------------------------------------

// Chunked variant: fn(lo, hi) per worker, for passes that want per-worker
// scratch buffers.
template <typename Fn>
void parallel_for_chunked(std::int64_t n, int threads, Fn&& fn) {
    if (n <= 0) return;
    if (threads <= 1) {
        fn(std::int64_t{0}, n);
        return;
    }
    const int t = static_cast<int>(std::min<std::int64_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(t));
    const std::int64_t chunk = (n + t - 1) / t;
    for (int w = 0; w < t; ++w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] { fn(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

template <typename Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
    if (n <= 0) return;
    if (threads <= 1 || n == 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const int t = static_cast<int>(std::min<std::int64_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(t));
    const std::int64_t chunk = (n + t - 1) / t;
    for (int w = 0; w < t; ++w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Little-endian binary IO. BinReader tracks the byte offset so parse errors
// can name where the file broke.
// ---------------------------------------------------------------------------

class BinWriter {
  public:
    explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) fail("cannot open file for writing: " + path);
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) fail("write failed: " + path_);
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        bytes(b, 8);
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void i32(std::int32_t v) {
        unsigned char b[4];
        const auto u = static_cast<std::uint32_t>(v);
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
        bytes(b, 4);
    }
    void f32(float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        i32(static_cast<std::int32_t>(u));
    }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void close() { out_.close(); }

  private:
    std::string path_;
    std::ofstream out_;
};

class BinReader {
  public:
    explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) fail("cannot open file: " + path);
    }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            fail(path_ + ": parse error at offset " + std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())) +
                 " (truncated file)");
        offset_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint64_t u64() {
        unsigned char b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    std::int32_t i32() {
        unsigned char b[4];
        bytes(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return static_cast<std::int32_t>(v);
    }
    float f32() {
        const auto u = static_cast<std::uint32_t>(i32());
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        if (n > (1ull << 32)) fail(path_ + ": parse error at offset " + std::to_string(offset_) + " (bad string length)");
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }
    std::size_t offset() const { return offset_; }
    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

  private:
    std::string path_;
    std::ifstream in_;
    std::size_t offset_ = 0;
};

}  // namespace stargraph
