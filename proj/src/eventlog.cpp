#include "attnxp/eventlog.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "attnxp/error.hpp"
#include "attnxp/rng.hpp"

namespace attnxp {

Vocabulary::Vocabulary(std::vector<std::string> labels) {
    for (auto& l : labels) {
        if (index_.count(l)) throw Error(ErrorKind::Schema, "duplicate activity label '" + l + "'");
        intern(l);
    }
}

const std::string& Vocabulary::label(ActivityId id) const {
    static const std::string pad_label{kPadLabel};
    static const std::string end_label{kEndLabel};
    if (id < labels_.size()) return labels_[id];
    if (id == pad()) return pad_label;
    if (id == end()) return end_label;
    throw Error(ErrorKind::Index, "activity id " + std::to_string(id) + " outside vocabulary");
}

std::optional<ActivityId> Vocabulary::find(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

ActivityId Vocabulary::intern(std::string_view label) {
    if (label == kPadLabel || label == kEndLabel) {
        throw Error(ErrorKind::Schema, "activity label '" + std::string(label) + "' is reserved");
    }
    auto [it, inserted] = index_.try_emplace(std::string(label), static_cast<ActivityId>(labels_.size()));
    if (inserted) labels_.emplace_back(label);
    return it->second;
}

std::vector<std::string> Vocabulary::full_labels() const {
    auto out = labels_;
    out.emplace_back(kPadLabel);
    out.emplace_back(kEndLabel);
    return out;
}

EventLog::EventLog(std::vector<Trace> traces, Vocabulary vocabulary)
    : traces_(std::move(traces)), vocabulary_(std::move(vocabulary)) {
    for (const auto& t : traces_) {
        if (t.activities.empty()) throw Error(ErrorKind::Schema, "trace '" + t.case_id + "' is empty");
        for (auto a : t.activities) {
            if (!vocabulary_.is_activity(a)) {
                throw Error(ErrorKind::Schema, "trace '" + t.case_id + "' uses id " + std::to_string(a) +
                                                   " outside the business vocabulary");
            }
        }
    }
}

LogStats EventLog::stats() const {
    LogStats s;
    s.num_cases = traces_.size();
    s.num_activities = vocabulary_.size();
    std::set<std::vector<ActivityId>> variants;
    for (const auto& t : traces_) {
        s.num_events += t.activities.size();
        s.max_len = std::max(s.max_len, t.activities.size());
        variants.insert(t.activities);
    }
    s.num_variants = variants.size();
    s.avg_len = s.num_cases ? static_cast<double>(s.num_events) / static_cast<double>(s.num_cases) : 0.0;
    return s;
}

EventLog EventLog::remapped(const Vocabulary& target) const {
    std::vector<ActivityId> map(vocabulary_.size());
    for (ActivityId i = 0; i < vocabulary_.size(); ++i) {
        auto id = target.find(vocabulary_.label(i));
        if (!id) throw Error(ErrorKind::Schema, "activity '" + vocabulary_.label(i) + "' unknown to the model vocabulary");
        map[i] = *id;
    }
    auto traces = traces_;
    for (auto& t : traces)
        for (auto& a : t.activities) a = map[a];
    return EventLog(std::move(traces), target);
}

EventLog EventLog::from_labels(const std::vector<std::pair<std::string, std::vector<std::string>>>& cases) {
    Vocabulary vocab;
    std::vector<Trace> traces;
    for (const auto& [case_id, labels] : cases) {
        Trace t{case_id, {}};
        for (const auto& l : labels) t.activities.push_back(vocab.intern(l));
        traces.push_back(std::move(t));
    }
    return EventLog(std::move(traces), std::move(vocab));
}

bool IngestFilter::keeps(std::string_view activity, const std::optional<std::string>& lifecycle_value) const {
    if (lifecycle && lifecycle_value && *lifecycle_value != *lifecycle) return false;
    if (activity_prefixes.empty()) return true;
    return std::any_of(activity_prefixes.begin(), activity_prefixes.end(),
                       [&](const std::string& p) { return activity.starts_with(p); });
}

namespace {

struct RawEvent {
    std::string activity;
    std::optional<std::int64_t> time;
    std::size_t order = 0;
};

struct RawCase {
    std::string case_id;
    std::vector<RawEvent> events;
};

// Groups are kept in first-appearance order of the case id.
EventLog assemble(std::vector<RawCase> cases, bool sort_by_time, const ParseOptions& options) {
    Vocabulary vocab;
    std::vector<Trace> traces;
    for (auto& c : cases) {
        if (c.events.empty()) {
            if (options.warnings) options.warnings->push_back("skipping trace '" + c.case_id + "' with no events");
            std::cerr << "warning: skipping trace '" << c.case_id << "' with no events\n";
            continue;
        }
        if (sort_by_time) {
            std::stable_sort(c.events.begin(), c.events.end(), [](const RawEvent& a, const RawEvent& b) {
                return a.time.value_or(0) < b.time.value_or(0);
            });
        }
        Trace t{c.case_id, {}};
        for (const auto& e : c.events) t.activities.push_back(vocab.intern(e.activity));
        traces.push_back(std::move(t));
    }
    if (traces.empty()) throw Error(ErrorKind::EmptyLog, "event log contains no traces");
    return EventLog(std::move(traces), std::move(vocab));
}

// RFC 4180 fields: quoted fields may contain commas, doubled quotes and newlines.
std::vector<std::vector<std::string>> read_csv_records(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    std::size_t i = 0;
    if (text.starts_with("\xEF\xBB\xBF")) i = 3;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].empty())) records.push_back(std::move(row));
        row.clear();
    };
    std::size_t line = 1;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started) throw Error(ErrorKind::Parse, "csv line " + std::to_string(line) + ": stray quote");
                quoted = true;
                field_started = true;
                break;
            case ',': end_field(); break;
            case '\r': break;
            case '\n':
                end_row();
                ++line;
                break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (quoted) throw Error(ErrorKind::Parse, "csv line " + std::to_string(line) + ": unterminated quoted field");
    if (!field.empty() || !row.empty()) end_row();
    return records;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::optional<std::int64_t> parse_timestamp(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (s.empty()) return std::nullopt;

    auto digits = [&](std::size_t pos, std::size_t n) -> std::optional<int> {
        if (pos + n > s.size()) return std::nullopt;
        int v = 0;
        for (std::size_t k = 0; k < n; ++k) {
            char c = s[pos + k];
            if (c < '0' || c > '9') return std::nullopt;
            v = v * 10 + (c - '0');
        }
        return v;
    };

    // Date-time form: YYYY-MM-DD[T ]HH:MM[:SS[.fff]][Z|±HH:MM]
    if (s.size() >= 10 && (s[4] == '-' || s[4] == '/') && s[7] == s[4]) {
        auto y = digits(0, 4), mo = digits(5, 2), d = digits(8, 2);
        if (!y || !mo || !d) return std::nullopt;
        std::int64_t secs = 0;
        std::int64_t micros = 0;
        std::size_t pos = 10;
        if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
            auto h = digits(pos + 1, 2), mi = digits(pos + 4, 2);
            if (!h || !mi || s.size() < pos + 6 || s[pos + 3] != ':') return std::nullopt;
            secs = *h * 3600 + *mi * 60;
            pos += 6;
            if (pos < s.size() && s[pos] == ':') {
                auto sec = digits(pos + 1, 2);
                if (!sec) return std::nullopt;
                secs += *sec;
                pos += 3;
                if (pos < s.size() && s[pos] == '.') {
                    ++pos;
                    std::int64_t scale = 100000;
                    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
                        micros += (s[pos] - '0') * scale;
                        scale /= 10;
                        ++pos;
                    }
                }
            }
            if (pos < s.size()) {
                if (s[pos] == 'Z') {
                    ++pos;
                } else if (s[pos] == '+' || s[pos] == '-') {
                    int sign = s[pos] == '+' ? 1 : -1;
                    auto oh = digits(pos + 1, 2);
                    if (!oh) return std::nullopt;
                    std::size_t mpos = pos + 3;
                    if (mpos < s.size() && s[mpos] == ':') ++mpos;
                    auto om = digits(mpos, 2);
                    if (!om) return std::nullopt;
                    secs -= sign * (*oh * 3600 + *om * 60);
                    pos = mpos + 2;
                }
            }
        }
        if (pos != s.size()) return std::nullopt;
        std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{static_cast<unsigned>(*mo)},
                                        std::chrono::day{static_cast<unsigned>(*d)}};
        if (!ymd.ok()) return std::nullopt;
        std::int64_t days = std::chrono::sys_days{ymd}.time_since_epoch().count();
        return (days * 86400 + secs) * 1000000 + micros;
    }

    // Plain number, interpreted as seconds.
    try {
        std::size_t used = 0;
        double v = std::stod(std::string(s), &used);
        if (used != s.size() || !std::isfinite(v)) return std::nullopt;
        return static_cast<std::int64_t>(std::llround(v * 1e6));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

EventLog parse_csv_text(std::string_view text, const CsvColumns& columns, const ParseOptions& options) {
    auto records = read_csv_records(text);
    if (records.empty()) throw Error(ErrorKind::EmptyLog, "csv input is empty");
    const auto& header = records.front();
    auto column = [&](const std::string& name, bool required) -> std::optional<std::size_t> {
        if (name.empty()) return std::nullopt;
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            if (required) throw Error(ErrorKind::Schema, "csv column '" + name + "' not found in header");
            return std::nullopt;
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t case_idx = *column(columns.case_col, true);
    const std::size_t act_idx = *column(columns.activity_col, true);
    const auto time_idx = column(columns.time_col, true);
    const auto life_idx = column(columns.lifecycle_col, true);
    if (records.size() == 1) throw Error(ErrorKind::EmptyLog, "csv input has a header but no rows");

    std::vector<RawCase> cases;
    std::unordered_map<std::string, std::size_t> case_index;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& row = records[r];
        auto need = std::max({case_idx, act_idx, time_idx.value_or(0), life_idx.value_or(0)});
        if (row.size() <= need) {
            throw Error(ErrorKind::Parse, "csv record " + std::to_string(r + 1) + ": expected at least " +
                                              std::to_string(need + 1) + " fields");
        }
        std::optional<std::string> lifecycle;
        if (life_idx) lifecycle = row[*life_idx];
        if (!options.filter.keeps(row[act_idx], lifecycle)) continue;
        RawEvent e{row[act_idx], std::nullopt, r};
        if (time_idx) {
            e.time = parse_timestamp(row[*time_idx]);
            if (!e.time) {
                throw Error(ErrorKind::Parse, "csv record " + std::to_string(r + 1) + ": unparseable timestamp '" +
                                                  row[*time_idx] + "'");
            }
        }
        auto [it, inserted] = case_index.try_emplace(row[case_idx], cases.size());
        if (inserted) cases.push_back(RawCase{row[case_idx], {}});
        cases[it->second].events.push_back(std::move(e));
    }
    return assemble(std::move(cases), time_idx.has_value(), options);
}

EventLog parse_csv(const std::filesystem::path& path, const CsvColumns& columns, const ParseOptions& options) {
    return parse_csv_text(read_file(path), columns, options);
}

namespace {

using boost::property_tree::ptree;

struct XesAttributes {
    std::optional<std::string> name;
    std::optional<std::string> timestamp;
    std::optional<std::string> lifecycle;
};

XesAttributes read_attributes(const ptree& node) {
    XesAttributes out;
    for (const auto& [tag, child] : node) {
        if (tag == "<xmlattr>") continue;
        auto key = child.get_optional<std::string>("<xmlattr>.key");
        auto value = child.get_optional<std::string>("<xmlattr>.value");
        if (!key || !value) continue;
        if (*key == "concept:name") out.name = *value;
        else if (*key == "time:timestamp") out.timestamp = *value;
        else if (*key == "lifecycle:transition") out.lifecycle = *value;
    }
    return out;
}

}  // namespace

EventLog parse_xes(const std::filesystem::path& path, const ParseOptions& options) {
    ptree tree;
    try {
        boost::property_tree::read_xml(path.string(), tree);
    } catch (const boost::property_tree::xml_parser_error& e) {
        if (e.line() == 0 && !std::filesystem::exists(path)) {
            throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
        }
        throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    auto log_node = tree.get_child_optional("log");
    if (!log_node) throw Error(ErrorKind::Parse, path.string() + ": missing <log> root element");

    std::vector<RawCase> cases;
    bool all_timed = true;
    std::size_t trace_no = 0;
    for (const auto& [tag, trace_node] : *log_node) {
        if (tag != "trace") continue;
        ++trace_no;
        auto trace_attrs = read_attributes(trace_node);
        RawCase c{trace_attrs.name.value_or("trace-" + std::to_string(trace_no)), {}};
        std::size_t order = 0;
        for (const auto& [etag, event_node] : trace_node) {
            if (etag != "event") continue;
            auto attrs = read_attributes(event_node);
            if (!attrs.name) {
                throw Error(ErrorKind::Parse, path.string() + ": event without concept:name in trace '" + c.case_id + "'");
            }
            if (!options.filter.keeps(*attrs.name, attrs.lifecycle)) continue;
            RawEvent e{*attrs.name, std::nullopt, order++};
            if (attrs.timestamp) e.time = parse_timestamp(*attrs.timestamp);
            if (!e.time) all_timed = false;
            c.events.push_back(std::move(e));
        }
        cases.push_back(std::move(c));
    }
    if (cases.empty()) throw Error(ErrorKind::EmptyLog, path.string() + ": log contains no traces");
    return assemble(std::move(cases), all_timed, options);
}

std::string to_csv(const EventLog& log) {
    auto quote = [](const std::string& s) {
        if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
        std::string out = "\"";
        for (char c : s) {
            if (c == '"') out += "\"\"";
            else out.push_back(c);
        }
        return out + "\"";
    };
    std::ostringstream out;
    out << "case,activity,timestamp\n";
    for (const auto& t : log.traces()) {
        for (std::size_t i = 0; i < t.activities.size(); ++i) {
            out << quote(t.case_id) << ',' << quote(log.vocabulary().label(t.activities[i])) << ',' << i << '\n';
        }
    }
    return out.str();
}

void write_csv(const EventLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    out << to_csv(log);
}

std::pair<EventLog, EventLog> split(const EventLog& log, double train_frac, std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0)) {
        throw Error(ErrorKind::Split, "train fraction must lie strictly between 0 and 1");
    }
    const std::size_t n = log.size();
    if (n < 2) throw Error(ErrorKind::Split, "cannot split a log with fewer than 2 traces");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, streams::kSplit));
    rng.shuffle(order);
    auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    // Keep the original relative order inside each half.
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    Vocabulary vocab;
    for (auto idx : {&train_idx, &test_idx})
        for (auto i : *idx)
            for (auto a : log.traces()[i].activities) vocab.intern(log.vocabulary().label(a));

    auto build = [&](const std::vector<std::size_t>& idx) {
        std::vector<Trace> traces;
        traces.reserve(idx.size());
        for (auto i : idx) {
            Trace t = log.traces()[i];
            for (auto& a : t.activities) a = *vocab.find(log.vocabulary().label(a));
            traces.push_back(std::move(t));
        }
        return EventLog(std::move(traces), vocab);
    };
    return {build(train_idx), build(test_idx)};
}

std::vector<Prefix> extract_prefixes(const EventLog& log, std::size_t min_len) {
    if (min_len < 1) throw Error(ErrorKind::Usage, "min_len must be at least 1");
    std::vector<Prefix> out;
    const ActivityId end = log.vocabulary().end();
    for (const auto& t : log.traces()) {
        const std::size_t n = t.activities.size();
        for (std::size_t r = min_len; r <= n; ++r) {
            Prefix p;
            p.activities.assign(t.activities.begin(), t.activities.begin() + static_cast<std::ptrdiff_t>(r));
            p.target = r < n ? t.activities[r] : end;
            p.source_case = t.case_id;
            out.push_back(std::move(p));
        }
    }
    return out;
}

}  // namespace attnxp
