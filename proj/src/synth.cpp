#include "attnxp/synth.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>

#include "attnxp/error.hpp"
#include "attnxp/rng.hpp"

namespace attnxp {

namespace {

constexpr std::size_t kMaxActivities = 10;

class TreeParser {
public:
    explicit TreeParser(std::string_view text) : s_(text) {}

    ProcessNode parse() {
        auto node = node_();
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing input");
        return node;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorKind::Spec, "process tree, column " + std::to_string(pos_ + 1) + ": " + msg);
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    std::string ident() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < s_.size()) {
            char c = s_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == ':') ++pos_;
            else break;
        }
        if (start == pos_) fail("expected a name");
        return std::string(s_.substr(start, pos_ - start));
    }

    ProcessNode node_() {
        std::string name = ident();
        skip_ws();
        if (pos_ >= s_.size() || s_[pos_] != '(') {
            ProcessNode leaf;
            leaf.label = name;
            return leaf;
        }
        ProcessNode n;
        if (name == "seq") n.kind = ProcessNode::Kind::Sequence;
        else if (name == "xor") n.kind = ProcessNode::Kind::Xor;
        else if (name == "and") n.kind = ProcessNode::Kind::And;
        else if (name == "loop") n.kind = ProcessNode::Kind::Loop;
        else fail("unknown operator '" + name + "'");
        expect('(');
        do {
            skip_ws();
            std::size_t save = pos_;
            std::string key = ident();
            if (accept('=')) {
                if (n.kind != ProcessNode::Kind::Loop) fail("options are only valid for loop");
                skip_ws();
                std::size_t start = pos_;
                while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
                std::string value(s_.substr(start, pos_ - start));
                if (value.empty()) fail("expected a number");
                if (key == "max_iter") {
                    n.max_iter = std::stoi(value);
                } else if (key == "p_redo") {
                    n.p_redo = std::stod(value);
                } else {
                    fail("unknown loop option '" + key + "'");
                }
            } else {
                pos_ = save;
                n.children.push_back(node_());
            }
        } while (accept(','));
        expect(')');
        if (n.children.empty()) fail("operator without children");
        if (n.kind == ProcessNode::Kind::Loop) {
            if (n.children.size() != 2) fail("loop takes exactly a body and a redo part");
            if (n.max_iter < 1) fail("max_iter must be >= 1");
            if (!(n.p_redo > 0.0 && n.p_redo < 1.0)) fail("p_redo must lie in (0, 1)");
        }
        return n;
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

void collect_labels(const ProcessNode& n, std::set<std::string>& out) {
    if (n.kind == ProcessNode::Kind::Activity) out.insert(n.label);
    for (const auto& c : n.children) collect_labels(c, out);
}

void validate(const ProcessNode& tree) {
    std::set<std::string> labels;
    collect_labels(tree, labels);
    if (labels.size() > kMaxActivities) {
        throw Error(ErrorKind::Spec, "process tree uses " + std::to_string(labels.size()) +
                                         " activities; at most 10 are supported");
    }
    for (const auto& l : labels) {
        if (l == kPadLabel || l == kEndLabel) throw Error(ErrorKind::Spec, "activity label '" + l + "' is reserved");
    }
}

LabelTrace sample(const ProcessNode& n, Rng& rng) {
    using K = ProcessNode::Kind;
    switch (n.kind) {
        case K::Activity: return {n.label};
        case K::Sequence: {
            LabelTrace out;
            for (const auto& c : n.children) {
                auto part = sample(c, rng);
                out.insert(out.end(), part.begin(), part.end());
            }
            return out;
        }
        case K::Xor: return sample(n.children[rng.below(n.children.size())], rng);
        case K::And: {
            std::vector<LabelTrace> parts;
            for (const auto& c : n.children) parts.push_back(sample(c, rng));
            std::vector<std::size_t> cursor(parts.size(), 0);
            LabelTrace out;
            for (;;) {
                std::vector<std::size_t> live;
                for (std::size_t i = 0; i < parts.size(); ++i)
                    if (cursor[i] < parts[i].size()) live.push_back(i);
                if (live.empty()) break;
                auto pick = live[rng.below(live.size())];
                out.push_back(parts[pick][cursor[pick]++]);
            }
            return out;
        }
        case K::Loop: {
            auto out = sample(n.children[0], rng);
            for (int i = 1; i < n.max_iter; ++i) {
                if (rng.uniform() >= n.p_redo) break;
                auto redo = sample(n.children[1], rng);
                auto body = sample(n.children[0], rng);
                out.insert(out.end(), redo.begin(), redo.end());
                out.insert(out.end(), body.begin(), body.end());
            }
            return out;
        }
    }
    return {};
}

Language concat(const Language& a, const Language& b) {
    Language out;
    for (const auto& [ta, pa] : a) {
        for (const auto& [tb, pb] : b) {
            LabelTrace t = ta;
            t.insert(t.end(), tb.begin(), tb.end());
            out[t] += pa * pb;
        }
    }
    return out;
}

// Interleavings of fixed branch traces, each step choosing uniformly among
// branches that still have events.
void interleave(const std::vector<const LabelTrace*>& parts, std::vector<std::size_t>& cursor, LabelTrace& current,
                double prob, Language& out) {
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < parts.size(); ++i)
        if (cursor[i] < parts[i]->size()) live.push_back(i);
    if (live.empty()) {
        out[current] += prob;
        return;
    }
    const double step = prob / static_cast<double>(live.size());
    for (auto i : live) {
        current.push_back((*parts[i])[cursor[i]++]);
        interleave(parts, cursor, current, step, out);
        --cursor[i];
        current.pop_back();
    }
}

Language enumerate(const ProcessNode& n) {
    using K = ProcessNode::Kind;
    switch (n.kind) {
        case K::Activity: return {{{n.label}, 1.0}};
        case K::Sequence: {
            Language acc{{{}, 1.0}};
            for (const auto& c : n.children) acc = concat(acc, enumerate(c));
            return acc;
        }
        case K::Xor: {
            Language out;
            const double w = 1.0 / static_cast<double>(n.children.size());
            for (const auto& c : n.children)
                for (const auto& [t, p] : enumerate(c)) out[t] += w * p;
            return out;
        }
        case K::And: {
            std::vector<Language> langs;
            for (const auto& c : n.children) langs.push_back(enumerate(c));
            Language out;
            std::vector<const LabelTrace*> parts(langs.size());
            std::function<void(std::size_t, double)> pick = [&](std::size_t i, double prob) {
                if (i == langs.size()) {
                    std::vector<std::size_t> cursor(parts.size(), 0);
                    LabelTrace current;
                    interleave(parts, cursor, current, prob, out);
                    return;
                }
                for (const auto& [t, p] : langs[i]) {
                    parts[i] = &t;
                    pick(i + 1, prob * p);
                }
            };
            pick(0, 1.0);
            return out;
        }
        case K::Loop: {
            const Language body = enumerate(n.children[0]);
            const Language cycle = concat(enumerate(n.children[1]), body);
            Language out;
            Language reached = body;  // traces after k body executions
            for (int k = 1; k <= n.max_iter; ++k) {
                const double stop = k == n.max_iter ? 1.0 : 1.0 - n.p_redo;
                for (const auto& [t, p] : reached) out[t] += p * stop;
                if (k == n.max_iter) break;
                Language next;
                for (const auto& [t, p] : concat(reached, cycle)) next[t] = p * n.p_redo;
                reached = std::move(next);
            }
            return out;
        }
    }
    return {};
}

}  // namespace

std::string to_string(const ProcessNode& n) {
    using K = ProcessNode::Kind;
    if (n.kind == K::Activity) return n.label;
    std::string out;
    switch (n.kind) {
        case K::Sequence: out = "seq("; break;
        case K::Xor: out = "xor("; break;
        case K::And: out = "and("; break;
        case K::Loop: out = "loop("; break;
        default: break;
    }
    for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) out += ", ";
        out += to_string(n.children[i]);
    }
    if (n.kind == K::Loop) {
        std::ostringstream opts;
        opts << ", max_iter=" << n.max_iter << ", p_redo=" << n.p_redo;
        out += opts.str();
    }
    return out + ")";
}

ProcessNode parse_process_tree(std::string_view text) {
    auto tree = TreeParser(text).parse();
    validate(tree);
    return tree;
}

SynthSpec parse_synth_spec(std::string_view text) {
    SynthSpec spec;
    bool have_tree = false;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::Spec, "synth spec line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "name") spec.name = value;
            else if (key == "tree") {
                spec.tree = parse_process_tree(value);
                have_tree = true;
            } else if (key == "traces") spec.traces = std::stoul(value);
            else if (key == "seed") spec.seed = std::stoull(value);
            else throw Error(ErrorKind::Spec, "unknown key '" + key + "'");
        } catch (const Error& e) {
            throw Error(ErrorKind::Spec, "synth spec line " + std::to_string(line_no) + ": " + e.what());
        } catch (const std::exception&) {
            throw Error(ErrorKind::Spec, "synth spec line " + std::to_string(line_no) + ": bad value for '" + key + "'");
        }
    }
    if (!have_tree) throw Error(ErrorKind::Spec, "synth spec has no 'tree' entry");
    return spec;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_synth_spec(ss.str());
}

Language enumerate_language(const ProcessNode& tree) { return enumerate(tree); }

EdgeSet directly_follows(const Language& language) {
    EdgeSet edges;
    for (const auto& [t, p] : language) {
        if (p <= 0.0) continue;
        for (std::size_t i = 0; i + 1 < t.size(); ++i) edges.emplace(t[i], t[i + 1]);
    }
    return edges;
}

std::set<std::string> possible_next(const Language& language, const LabelTrace& prefix) {
    std::set<std::string> out;
    for (const auto& [t, p] : language) {
        if (p <= 0.0 || t.size() < prefix.size()) continue;
        if (!std::equal(prefix.begin(), prefix.end(), t.begin())) continue;
        out.insert(t.size() == prefix.size() ? std::string(kEndLabel) : t[prefix.size()]);
    }
    return out;
}

SynthResult synth_log(const SynthSpec& spec, std::size_t n_traces, std::uint64_t seed) {
    validate(spec.tree);
    if (n_traces == 0) throw Error(ErrorKind::Spec, "n_traces must be positive");
    Rng rng(derive_seed(seed, streams::kSynth));
    std::vector<std::pair<std::string, std::vector<std::string>>> cases;
    cases.reserve(n_traces);
    for (std::size_t i = 0; i < n_traces; ++i) {
        cases.emplace_back("case-" + std::to_string(i + 1), sample(spec.tree, rng));
    }
    return {EventLog::from_labels(cases), directly_follows(enumerate_language(spec.tree))};
}

std::string format_edges(const EdgeSet& edges) {
    std::string out;
    for (const auto& [a, b] : edges) out += a + " -> " + b + "\n";
    return out;
}

EdgeSet parse_edges(std::string_view text) {
    EdgeSet edges;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto arrow = line.find("->");
        if (arrow == std::string::npos) throw Error(ErrorKind::Parse, "edge line without '->': " + line);
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        edges.emplace(trim(line.substr(0, arrow)), trim(line.substr(arrow + 2)));
    }
    return edges;
}

}  // namespace attnxp
