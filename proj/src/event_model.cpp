#include "evstar/event_model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string_view>

namespace evstar {

namespace {

constexpr std::array<char, 3> kMagic = {'E', 'V', 'S'};

std::string describe(const Event& e) {
    std::ostringstream os;
    os << "(t=" << e.t << ", x=" << e.x << ", y=" << e.y << ", p=" << sign(e.p) << ")";
    return os.str();
}

// Shared validation for both readers and the EventStream constructor.
// Returns nullopt when the record is acceptable.
std::optional<RecordError> check_event(std::int64_t t, std::int64_t x, std::int64_t y, std::int64_t p,
                                       const SensorGeometry& g, std::optional<std::int64_t> prev_t,
                                       std::uint64_t location) {
    using K = FormatError::Kind;
    if (p != 1 && p != -1)
        return RecordError{K::Malformed, location, "polarity must be 1 or -1, got " + std::to_string(p)};
    if (t < 0) return RecordError{K::Malformed, location, "negative timestamp " + std::to_string(t)};
    if (x < 0 || y < 0 || x >= g.width || y >= g.height) {
        std::ostringstream os;
        os << "coordinate (" << x << ", " << y << ") outside " << g.width << "x" << g.height << " sensor";
        return RecordError{K::OutOfBounds, location, os.str()};
    }
    if (prev_t && t < *prev_t) {
        std::ostringstream os;
        os << "timestamp regression: " << t << " after " << *prev_t;
        return RecordError{K::TimestampRegression, location, os.str()};
    }
    return std::nullopt;
}

[[noreturn]] void raise(const RecordError& e, std::string_view where) {
    throw FormatError(e.kind, e.location, std::string(where) + " " + std::to_string(e.location) + ": " + e.message);
}

template <typename T>
bool parse_int(std::string_view s, T& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

struct Reader {
    std::vector<Event> events;
    std::vector<RecordError> errors;
    std::size_t records = 0;
    bool strict = true;
    std::string_view where;

    void fail(RecordError e) {
        if (strict) raise(e, where);
        errors.push_back(std::move(e));
    }
};

// "# epoch_us=N" comment lines carry the stream epoch; raw timestamps are
// absolute and get rebased against it.
std::int64_t read_csv(std::istream& in, const SensorGeometry& g, Reader& r) {
    r.where = "line";
    std::string line;
    std::uint64_t lineno = 0;
    std::int64_t epoch = 0;
    bool seen_record = false;
    std::optional<std::int64_t> prev_t;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view sv(line);
        if (!sv.empty() && sv.back() == '\r') sv.remove_suffix(1);
        if (sv.find_first_not_of(" \t") == std::string_view::npos) continue;
        if (sv.front() == '#') {
            constexpr std::string_view key = "epoch_us=";
            if (auto pos = sv.find(key); pos != std::string_view::npos && !seen_record)
                parse_int(sv.substr(pos + key.size()), epoch);
            continue;
        }
        // Header row: anything whose first character cannot start a number.
        if (!seen_record && !(std::isdigit(static_cast<unsigned char>(sv.front())) || sv.front() == '-' ||
                              sv.front() == '+')) {
            seen_record = true;
            continue;
        }
        seen_record = true;
        ++r.records;
        std::array<std::int64_t, 4> f{};
        std::size_t field = 0;
        bool ok = true;
        std::size_t start = 0;
        while (ok) {
            auto comma = sv.find(',', start);
            auto token = sv.substr(start, comma == std::string_view::npos ? sv.size() - start : comma - start);
            if (field >= f.size() || !parse_int(token, f[field])) ok = false;
            ++field;
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (!ok || field != 4) {
            r.fail({FormatError::Kind::Malformed, lineno, "expected 4 integer fields t_us,x,y,p"});
            continue;
        }
        const std::int64_t t = f[0] - epoch;
        if (auto err = check_event(t, f[1], f[2], f[3], g, prev_t, lineno)) {
            r.fail(std::move(*err));
            continue;
        }
        prev_t = t;
        r.events.push_back({static_cast<std::uint16_t>(f[1]), static_cast<std::uint16_t>(f[2]), t,
                            f[3] > 0 ? Polarity::On : Polarity::Off});
    }
    return epoch;
}

template <typename T>
T load_le(const unsigned char* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
    return v;
}

template <typename T>
void store_le(unsigned char* p, T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) p[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
}

struct BinaryHeader {
    SensorGeometry geometry;
    std::int64_t epoch = 0;
};

BinaryHeader read_binary(std::istream& in, Reader& r) {
    r.where = "byte offset";
    std::array<unsigned char, kBinaryHeaderSize> h{};
    in.read(reinterpret_cast<char*>(h.data()), h.size());
    if (in.gcount() != static_cast<std::streamsize>(h.size()))
        throw FormatError(FormatError::Kind::Malformed, 0, "byte offset 0: truncated header");
    if (std::memcmp(h.data(), kMagic.data(), kMagic.size()) != 0)
        throw FormatError(FormatError::Kind::Malformed, 0, "byte offset 0: bad magic");
    if (h[3] != kBinaryVersion)
        throw FormatError(FormatError::Kind::Malformed, 3,
                          "byte offset 3: unsupported version " + std::to_string(h[3]));
    BinaryHeader header;
    header.geometry.width = load_le<std::uint16_t>(&h[4]);
    header.geometry.height = load_le<std::uint16_t>(&h[6]);
    header.epoch = static_cast<std::int64_t>(load_le<std::uint64_t>(&h[8]));
    if (header.geometry.width <= 0 || header.geometry.height <= 0)
        throw FormatError(FormatError::Kind::Malformed, 4, "byte offset 4: empty sensor geometry");

    std::optional<std::int64_t> prev_t;
    std::array<unsigned char, kBinaryRecordSize> rec{};
    std::uint64_t offset = kBinaryHeaderSize;
    for (;;) {
        in.read(reinterpret_cast<char*>(rec.data()), rec.size());
        auto got = in.gcount();
        if (got == 0) break;
        ++r.records;
        if (got != static_cast<std::streamsize>(rec.size())) {
            r.fail({FormatError::Kind::Malformed, offset, "truncated record"});
            break;
        }
        auto raw_t = load_le<std::uint64_t>(&rec[0]);
        auto x = load_le<std::uint16_t>(&rec[8]);
        auto y = load_le<std::uint16_t>(&rec[10]);
        auto p = static_cast<std::int8_t>(rec[12]);
        std::int64_t t = static_cast<std::int64_t>(raw_t) - header.epoch;
        if (auto err = check_event(t, x, y, p, header.geometry, prev_t, offset)) {
            r.fail(std::move(*err));
        } else {
            prev_t = t;
            r.events.push_back({x, y, t, p > 0 ? Polarity::On : Polarity::Off});
        }
        offset += rec.size();
    }
    return header;
}

std::ifstream open_in(const std::filesystem::path& path, StreamFormat format) {
    std::ifstream in(path, format == StreamFormat::Binary ? std::ios::binary : std::ios::in);
    if (!in) throw FormatError(FormatError::Kind::Io, 0, "cannot open " + path.string());
    return in;
}

LenientReadResult read_impl(const std::filesystem::path& path, StreamFormat format,
                            std::optional<SensorGeometry> geometry, bool strict) {
    auto in = open_in(path, format);
    Reader r;
    r.strict = strict;
    SensorGeometry g;
    std::int64_t epoch = 0;
    if (format == StreamFormat::Csv) {
        if (!geometry) throw std::invalid_argument("CSV event files need an explicit sensor geometry");
        g = *geometry;
        epoch = read_csv(in, g, r);
    } else {
        auto header = read_binary(in, r);
        g = header.geometry;
        epoch = header.epoch;
    }
    LenientReadResult out;
    out.stream = EventStream(std::move(r.events), g, epoch);
    out.errors = std::move(r.errors);
    out.records = r.records;
    return out;
}

}  // namespace

EventStream::EventStream(std::vector<Event> events, SensorGeometry geometry, std::int64_t epoch_us,
                         std::optional<double> pixel_scale)
    : events_(std::move(events)), geometry_(geometry), epoch_us_(epoch_us), pixel_scale_(pixel_scale) {
    if (geometry_.width <= 0 || geometry_.height <= 0)
        throw std::invalid_argument("sensor geometry must be positive");
    std::optional<std::int64_t> prev;
    for (std::size_t i = 0; i < events_.size(); ++i) {
        const auto& e = events_[i];
        if (auto err = check_event(e.t, e.x, e.y, sign(e.p), geometry_, prev, i))
            throw FormatError(err->kind, i, "event " + std::to_string(i) + " " + describe(e) + ": " + err->message);
        prev = e.t;
    }
}

std::pair<std::size_t, std::size_t> EventStream::index_range(std::int64_t t0, std::int64_t t1) const {
    auto by_t = [](const Event& e, std::int64_t t) { return e.t < t; };
    auto lo = std::lower_bound(events_.begin(), events_.end(), t0, by_t);
    auto hi = std::lower_bound(lo, events_.end(), std::max(t0, t1), by_t);
    return {static_cast<std::size_t>(lo - events_.begin()), static_cast<std::size_t>(hi - events_.begin())};
}

EventStream read_stream(const std::filesystem::path& path, StreamFormat format,
                        std::optional<SensorGeometry> geometry) {
    return read_impl(path, format, geometry, true).stream;
}

LenientReadResult read_stream_lenient(const std::filesystem::path& path, StreamFormat format,
                                      std::optional<SensorGeometry> geometry) {
    return read_impl(path, format, geometry, false);
}

void write_stream(const EventStream& stream, const std::filesystem::path& path, StreamFormat format) {
    std::ofstream out(path, format == StreamFormat::Binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::Io, 0, "cannot open " + path.string() + " for writing");

    if (format == StreamFormat::Csv) {
        std::string buf;
        if (stream.epoch_us() != 0) buf += "# epoch_us=" + std::to_string(stream.epoch_us()) + "\n";
        buf += "t_us,x,y,p\n";
        auto put = [&buf](std::int64_t v, char sep) {
            char tmp[24];
            auto res = std::to_chars(tmp, tmp + sizeof tmp, v);
            buf.append(tmp, res.ptr);
            buf.push_back(sep);
        };
        for (const auto& e : stream.events()) {
            put(e.t + stream.epoch_us(), ',');
            put(e.x, ',');
            put(e.y, ',');
            put(sign(e.p), '\n');
            if (buf.size() > (1u << 20)) {
                out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
                buf.clear();
            }
        }
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    } else {
        const auto& g = stream.geometry();
        if (g.width > 0xFFFF || g.height > 0xFFFF)
            throw std::invalid_argument("sensor geometry does not fit the binary header");
        std::array<unsigned char, kBinaryHeaderSize> h{};
        std::memcpy(h.data(), kMagic.data(), kMagic.size());
        h[3] = kBinaryVersion;
        store_le<std::uint16_t>(&h[4], static_cast<std::uint16_t>(g.width));
        store_le<std::uint16_t>(&h[6], static_cast<std::uint16_t>(g.height));
        store_le<std::uint64_t>(&h[8], static_cast<std::uint64_t>(stream.epoch_us()));
        out.write(reinterpret_cast<const char*>(h.data()), h.size());

        std::vector<unsigned char> buf;
        buf.reserve(kBinaryRecordSize * 65536);
        std::array<unsigned char, kBinaryRecordSize> rec{};
        for (const auto& e : stream.events()) {
            store_le<std::uint64_t>(&rec[0], static_cast<std::uint64_t>(e.t + stream.epoch_us()));
            store_le<std::uint16_t>(&rec[8], e.x);
            store_le<std::uint16_t>(&rec[10], e.y);
            rec[12] = static_cast<unsigned char>(static_cast<std::int8_t>(sign(e.p)));
            buf.insert(buf.end(), rec.begin(), rec.end());
            if (buf.size() >= kBinaryRecordSize * 65536) {
                out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
                buf.clear();
            }
        }
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw FormatError(FormatError::Kind::Io, 0, "write failed for " + path.string());
}

EventStream slice_time(const EventStream& stream, std::int64_t t0, std::int64_t t1) {
    if (t0 > t1) throw std::invalid_argument("slice_time: t0 > t1");
    auto [lo, hi] = stream.index_range(t0, t1);
    auto ev = stream.events();
    return EventStream(std::vector<Event>(ev.begin() + static_cast<std::ptrdiff_t>(lo),
                                          ev.begin() + static_cast<std::ptrdiff_t>(hi)),
                       stream.geometry(), stream.epoch_us(), stream.pixel_scale());
}

StreamFormat format_from_path(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv" ? StreamFormat::Csv : StreamFormat::Binary;
}

}  // namespace evstar
