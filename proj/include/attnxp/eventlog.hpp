#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace attnxp {

using ActivityId = std::uint32_t;

inline constexpr std::string_view kPadLabel = "_";
inline constexpr std::string_view kEndLabel = "<END>";

// Closed activity vocabulary. Business activities occupy [0, size()); the two
// reserved symbols PAD and END follow at size() and size() + 1.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> labels);

    std::size_t size() const noexcept { return labels_.size(); }
    std::size_t symbol_count() const noexcept { return labels_.size() + 2; }
    ActivityId pad() const noexcept { return static_cast<ActivityId>(labels_.size()); }
    ActivityId end() const noexcept { return static_cast<ActivityId>(labels_.size() + 1); }
    bool is_activity(ActivityId id) const noexcept { return id < labels_.size(); }

    const std::string& label(ActivityId id) const;
    std::optional<ActivityId> find(std::string_view label) const;
    // Returns the existing id or appends a new activity.
    ActivityId intern(std::string_view label);

    const std::vector<std::string>& labels() const noexcept { return labels_; }
    // Business labels followed by PAD and END.
    std::vector<std::string> full_labels() const;

    bool operator==(const Vocabulary& other) const { return labels_ == other.labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, ActivityId> index_;
};

struct Trace {
    std::string case_id;
    std::vector<ActivityId> activities;

    bool operator==(const Trace&) const = default;
};

struct Prefix {
    std::vector<ActivityId> activities;
    ActivityId target = 0;
    std::string source_case;

    std::size_t size() const noexcept { return activities.size(); }
    bool operator==(const Prefix&) const = default;
};

struct LogStats {
    std::size_t num_cases = 0;
    std::size_t num_activities = 0;
    std::size_t num_events = 0;
    double avg_len = 0.0;
    std::size_t max_len = 0;
    std::size_t num_variants = 0;
};

class EventLog {
public:
    EventLog() = default;
    // Validates that every id is a business activity of the vocabulary.
    EventLog(std::vector<Trace> traces, Vocabulary vocabulary);

    const std::vector<Trace>& traces() const noexcept { return traces_; }
    const Vocabulary& vocabulary() const noexcept { return vocabulary_; }
    std::size_t size() const noexcept { return traces_.size(); }
    bool empty() const noexcept { return traces_.empty(); }

    LogStats stats() const;
    // Re-expresses the traces over another vocabulary by label. Throws Schema
    // if an activity is missing from the target vocabulary.
    EventLog remapped(const Vocabulary& target) const;
    // Builds a log from label sequences; vocabulary in first-appearance order.
    static EventLog from_labels(const std::vector<std::pair<std::string, std::vector<std::string>>>& cases);

    bool operator==(const EventLog& other) const {
        return traces_ == other.traces_ && vocabulary_ == other.vocabulary_;
    }

private:
    std::vector<Trace> traces_;
    Vocabulary vocabulary_;
};

// Optional ingestion filters (used to derive e.g. the BPIC12 O_/W_ sub-logs).
struct IngestFilter {
    // Keep only events whose activity label starts with one of these; empty keeps all.
    std::vector<std::string> activity_prefixes;
    // Keep only events whose lifecycle attribute equals this value (when the
    // attribute is present).
    std::optional<std::string> lifecycle;

    bool keeps(std::string_view activity, const std::optional<std::string>& lifecycle_value) const;
};

struct CsvColumns {
    std::string case_col = "case";
    std::string activity_col = "activity";
    // Empty means "keep file order".
    std::string time_col = "timestamp";
    std::string lifecycle_col;
};

struct ParseOptions {
    IngestFilter filter;
    // Receives non-fatal diagnostics such as skipped empty traces.
    std::vector<std::string>* warnings = nullptr;
};

EventLog parse_csv(const std::filesystem::path& path, const CsvColumns& columns = {},
                   const ParseOptions& options = {});
EventLog parse_csv_text(std::string_view text, const CsvColumns& columns = {},
                        const ParseOptions& options = {});
EventLog parse_xes(const std::filesystem::path& path, const ParseOptions& options = {});

// Writes case,activity,timestamp rows where the timestamp is the event index.
void write_csv(const EventLog& log, const std::filesystem::path& path);
std::string to_csv(const EventLog& log);

// Parses ISO-8601 style timestamps ("2016-01-04T12:09:44.000+01:00",
// "2016-01-04 12:09:44") or plain numbers into microseconds since the epoch.
std::optional<std::int64_t> parse_timestamp(std::string_view text);

// Trace-level seeded split. The returned logs share one vocabulary ordered by
// first appearance in the training half, then test-only activities.
std::pair<EventLog, EventLog> split(const EventLog& log, double train_frac, std::uint64_t seed);

// Prefixes of length min_len..n-1 with next-activity targets, plus the full
// trace with target END; trace order, then ascending length.
std::vector<Prefix> extract_prefixes(const EventLog& log, std::size_t min_len = 1);

}  // namespace attnxp
