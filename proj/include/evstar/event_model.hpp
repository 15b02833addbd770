#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace evstar {

enum class Polarity : std::int8_t { Off = -1, On = 1 };

inline int sign(Polarity p) { return static_cast<int>(p); }

/// A single change event from the sensor. Timestamps are microseconds
/// relative to the stream epoch.
struct Event {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::int64_t t = 0;
    Polarity p = Polarity::On;

    friend bool operator==(const Event&, const Event&) = default;
};

struct SensorGeometry {
    int width = 1280;
    int height = 720;
    double pixel_pitch_um = 4.86;  // metadata only

    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
    double center_x() const { return 0.5 * (width - 1); }
    double center_y() const { return 0.5 * (height - 1); }

    friend bool operator==(const SensorGeometry& a, const SensorGeometry& b) {
        return a.width == b.width && a.height == b.height;
    }
};

enum class StreamFormat { Csv, Binary };

/// Raised for any record that cannot be ingested. Carries the 1-based CSV
/// line number or the byte offset of the binary record.
class FormatError : public std::runtime_error {
public:
    enum class Kind { Malformed, TimestampRegression, OutOfBounds, Io };

    FormatError(Kind kind, std::uint64_t location, const std::string& what)
        : std::runtime_error(what), kind_(kind), location_(location) {}

    Kind kind() const { return kind_; }
    std::uint64_t location() const { return location_; }

private:
    Kind kind_;
    std::uint64_t location_;
};

/// Immutable, validated, time-ordered collection of events.
class EventStream {
public:
    EventStream() = default;

    /// Validates bounds, polarity and timestamp order; throws FormatError.
    EventStream(std::vector<Event> events, SensorGeometry geometry, std::int64_t epoch_us = 0,
                std::optional<double> pixel_scale = std::nullopt);

    std::span<const Event> events() const { return events_; }
    const SensorGeometry& geometry() const { return geometry_; }
    std::int64_t epoch_us() const { return epoch_us_; }
    std::optional<double> pixel_scale() const { return pixel_scale_; }

    std::size_t size() const { return events_.size(); }
    bool empty() const { return events_.empty(); }
    const Event& operator[](std::size_t i) const { return events_[i]; }

    std::int64_t t_first() const { return events_.empty() ? 0 : events_.front().t; }
    std::int64_t t_last() const { return events_.empty() ? 0 : events_.back().t; }
    std::int64_t duration_us() const { return t_last() - t_first(); }

    /// Index range [begin, end) of events with t0 <= t < t1.
    std::pair<std::size_t, std::size_t> index_range(std::int64_t t0, std::int64_t t1) const;

    /// Persisted content only: pixel_scale is an annotation and is ignored.
    friend bool operator==(const EventStream& a, const EventStream& b) {
        return a.geometry_ == b.geometry_ && a.epoch_us_ == b.epoch_us_ && a.events_ == b.events_;
    }

private:
    std::vector<Event> events_;
    SensorGeometry geometry_;
    std::int64_t epoch_us_ = 0;
    std::optional<double> pixel_scale_;
};

struct RecordError {
    FormatError::Kind kind;
    std::uint64_t location;
    std::string message;
};

/// Result of a lenient read: every input record is either an event or an error.
struct LenientReadResult {
    EventStream stream;
    std::vector<RecordError> errors;
    std::size_t records = 0;
};

/// Binary layout: 16-byte header ("EVS", version u8, width u16, height u16,
/// epoch u64), then packed little-endian records (u64 t, u16 x, u16 y, i8 p).
inline constexpr std::uint8_t kBinaryVersion = 1;
inline constexpr std::size_t kBinaryHeaderSize = 16;
inline constexpr std::size_t kBinaryRecordSize = 13;

/// CSV needs the geometry from the caller; binary takes it from the header.
EventStream read_stream(const std::filesystem::path& path, StreamFormat format,
                        std::optional<SensorGeometry> geometry = std::nullopt);

LenientReadResult read_stream_lenient(const std::filesystem::path& path, StreamFormat format,
                                      std::optional<SensorGeometry> geometry = std::nullopt);

void write_stream(const EventStream& stream, const std::filesystem::path& path, StreamFormat format);

EventStream slice_time(const EventStream& stream, std::int64_t t0, std::int64_t t1);

/// Picks the format from the extension (.csv or anything else = binary).
StreamFormat format_from_path(const std::filesystem::path& path);

}  // namespace evstar
