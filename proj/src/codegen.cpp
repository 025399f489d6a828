#include "aps/codegen.hpp"

#include <algorithm>
#include <regex>

#include "aps/util.hpp"

namespace aps::codegen {

namespace data {
extern const std::string kGeneration;
extern const std::string kRepair;
extern const std::string kMeta;
extern const std::string kSignature;
extern const std::string kRefineInstruction;
extern const std::string kExploreInstruction;
extern const std::string kRefineTaskMode;
extern const std::string kExploreTaskMode;
}  // namespace data

const std::string& template_text(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::Generation: return data::kGeneration;
    case TemplateKind::Repair: return data::kRepair;
    case TemplateKind::Meta: return data::kMeta;
  }
  return data::kGeneration;
}

const std::string& policy_signature() { return data::kSignature; }

const char* to_string(Mode m) { return m == Mode::Explore ? "explore" : "refine"; }

const std::string& explore_or_refine_instruction(Mode m) {
  return m == Mode::Explore ? data::kExploreInstruction : data::kRefineInstruction;
}

const std::string& task_mode_text(Mode m) {
  return m == Mode::Explore ? data::kExploreTaskMode : data::kRefineTaskMode;
}

namespace {

bool ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }

// Length of a {identifier} site starting at tpl[i], or 0.
std::size_t site_length(std::string_view tpl, std::size_t i) {
  if (tpl[i] != '{' || i + 1 >= tpl.size() || !ident_start(tpl[i + 1])) return 0;
  std::size_t j = i + 2;
  while (j < tpl.size() && ident_char(tpl[j])) ++j;
  return j < tpl.size() && tpl[j] == '}' ? j + 1 - i : 0;
}

}  // namespace

std::vector<std::string> placeholders(std::string_view tpl) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tpl.size(); ++i) {
    if (const auto n = site_length(tpl, i)) {
      out.emplace_back(tpl.substr(i + 1, n - 2));
      i += n - 1;
    }
  }
  return out;
}

std::string render(std::string_view tpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tpl.size() * 2);
  for (std::size_t i = 0; i < tpl.size(); ++i) {
    const auto n = site_length(tpl, i);
    if (n == 0) {
      out.push_back(tpl[i]);
      continue;
    }
    const std::string name(tpl.substr(i + 1, n - 2));
    const auto it = values.find(name);
    if (it == values.end() || it->second.empty()) throw UnboundPlaceholder(name);
    out += it->second;
    i += n - 1;
  }
  return out;
}

std::string fence_for(std::string_view code) {
  std::size_t longest = 0, run = 0;
  for (char c : code) {
    run = c == '`' ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  return std::string(std::max<std::size_t>(3, longest + 1), '`');
}

std::string build_generation_prompt(const std::string& task_description, const std::string& signature,
                                    const SystemParams& params) {
  return render(template_text(TemplateKind::Generation),
                {{"task_description", task_description},
                 {"policy_signature", signature},
                 {"charge_max", util::format_double(params.charge_max)},
                 {"discharge_max", util::format_double(params.discharge_max)}});
}

std::string build_repair_prompt(const std::string& error_message, const std::string& failed_code,
                                const std::string& signature) {
  return render(template_text(TemplateKind::Repair), {{"error_message", error_message},
                                                      {"policy_code", failed_code},
                                                      {"policy_signature", signature},
                                                      {"fence", fence_for(failed_code)}});
}

std::uint64_t content_hash(std::string_view source) { return util::fnv1a64(source); }

std::string CandidateArtifact::hash_hex() const { return util::hex64(content_hash); }

namespace {

struct Line {
  std::size_t begin = 0;  // offset in the text
  std::size_t end = 0;    // offset past the newline (or text end)
  std::string_view body;  // without the newline
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::size_t stop = nl == std::string_view::npos ? text.size() : nl;
    std::string_view body = text.substr(pos, stop - pos);
    if (!body.empty() && body.back() == '\r') body.remove_suffix(1);
    const std::size_t next = nl == std::string_view::npos ? text.size() : nl + 1;
    lines.push_back({pos, next, body});
    pos = next;
  }
  return lines;
}

bool blank(std::string_view s) { return util::trim(s).empty(); }

// Number of leading backticks when the line opens or closes a fence, else 0.
std::size_t fence_ticks(std::string_view line) {
  const auto s = util::trim(line);
  std::size_t n = 0;
  while (n < s.size() && s[n] == '`') ++n;
  return n >= 3 ? n : 0;
}

const std::regex& class_re() {
  static const std::regex re(R"(^class\s+([A-Za-z_]\w*)\s*(\([^)]*\))?\s*:)");
  return re;
}
const std::regex& take_action_re() {
  static const std::regex re(R"(^\s+(async\s+)?def\s+take_action\s*\()");
  return re;
}
const std::regex& code_like_re() {
  static const std::regex re(
      R"(^(import\s|from\s+\S+\s+import\s|def\s|class\s|@|#|if\s+__name__|[A-Za-z_]\w*(\s*,\s*[A-Za-z_]\w*)*\s*=[^=]|[A-Za-z_][\w.]*\(.*\)\s*$))");
  return re;
}

bool indented(std::string_view s) { return !s.empty() && (s[0] == ' ' || s[0] == '\t'); }

bool code_like(std::string_view s) {
  if (indented(s)) return true;
  const std::string str(s);
  return std::regex_search(str, code_like_re());
}

// Tracks triple-quoted strings across a line. Returns the quote character of a string
// still open at the end of the line, or 0.
char scan_triple_quotes(std::string_view line, char open) {
  for (std::size_t k = 0; k + 2 < line.size(); ++k) {
    const char q = line[k];
    if ((q != '"' && q != '\'') || line[k + 1] != q || line[k + 2] != q) {
      if (!open && q == '#') break;  // comment
      continue;
    }
    if (!open) {
      open = q;
      k += 2;
    } else if (q == open) {
      open = 0;
      k += 2;
    }
  }
  return open;
}

struct ClassSpan {
  std::size_t first = 0, last = 0;  // line indices, inclusive
  std::string name;
  bool has_take_action = false;
};

// Top-level classes in lines[from, to).
std::vector<ClassSpan> find_classes(const std::vector<Line>& lines, std::size_t from, std::size_t to) {
  std::vector<ClassSpan> out;
  for (std::size_t i = from; i < to; ++i) {
    std::smatch m;
    const std::string s(lines[i].body);
    if (!std::regex_search(s, m, class_re())) continue;
    ClassSpan c;
    c.first = i;
    c.name = m[1];
    c.last = i;
    std::size_t j = i + 1;
    char open_quote = 0;  // inside a triple-quoted string started on an earlier line
    for (; j < to; ++j) {
      const auto b = lines[j].body;
      if (open_quote) {
        c.last = j;
        open_quote = scan_triple_quotes(b, open_quote);
        continue;
      }
      if (blank(b)) continue;
      if (!indented(b) && b[0] != '#') break;
      if (indented(b)) c.last = j;
      open_quote = scan_triple_quotes(b, 0);
      const std::string bs(b);
      if (std::regex_search(bs, take_action_re())) c.has_take_action = true;
    }
    out.push_back(c);
    i = c.last;
  }
  return out;
}

struct Region {
  std::size_t from = 0, to = 0;  // lines[from, to)
};

}  // namespace

CandidateArtifact extract_policy(std::string_view raw) {
  CandidateArtifact art;
  art.raw_output = std::string(raw);
  if (blank(raw)) throw NoPolicyFound("model output is empty");

  const auto lines = split_lines(raw);

  // Fenced blocks, matched by opening length.
  std::vector<Region> blocks;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto ticks = fence_ticks(lines[i].body);
    if (!ticks) continue;
    std::size_t j = i + 1;
    while (j < lines.size()) {
      const auto t = fence_ticks(lines[j].body);
      if (t >= ticks && util::trim(lines[j].body).size() == t) break;
      ++j;
    }
    blocks.push_back({i + 1, j});
    i = j;  // an unterminated fence runs to the end
  }

  Region region{0, lines.size()};
  std::vector<ClassSpan> policies;
  if (!blocks.empty()) {
    std::vector<std::size_t> with_policy;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      for (const auto& c : find_classes(lines, blocks[b].from, blocks[b].to)) {
        if (c.has_take_action) {
          with_policy.push_back(b);
          break;
        }
      }
    }
    if (with_policy.size() > 1) {
      throw MultiplePolicies("policy classes found in " + std::to_string(with_policy.size()) + " separate code blocks");
    }
    if (with_policy.size() == 1) {
      region = blocks[with_policy[0]];
      art.extraction_notes.push_back("selected fenced block " + std::to_string(with_policy[0] + 1) + " of " +
                                     std::to_string(blocks.size()));
    }
  }

  std::vector<ClassSpan> classes;
  if (region.from == 0 && region.to == lines.size() && !blocks.empty()) {
    // No block holds a policy: scan everything outside the fence markers.
    for (const auto& b : blocks) {
      const auto part = find_classes(lines, b.from, b.to);
      classes.insert(classes.end(), part.begin(), part.end());
    }
    const auto outside = find_classes(lines, 0, lines.size());
    for (const auto& c : outside) {
      const bool dup = std::any_of(classes.begin(), classes.end(), [&](const ClassSpan& k) { return k.first == c.first; });
      if (!dup) classes.push_back(c);
    }
  } else {
    classes = find_classes(lines, region.from, region.to);
  }
  for (const auto& c : classes) {
    if (c.has_take_action) policies.push_back(c);
  }
  if (policies.size() > 1) {
    std::string names;
    for (const auto& p : policies) names += (names.empty() ? "" : ", ") + p.name;
    throw MultiplePolicies("more than one class defines take_action: " + names);
  }
  if (policies.empty()) {
    if (!classes.empty()) {
      throw NoPolicyFound("class " + classes.front().name + " does not define take_action");
    }
    throw NoPolicyFound("no top-level class definition found");
  }

  const auto& pol = policies.front();
  if (pol.first < region.from || pol.first >= region.to) region = {0, lines.size()};

  // Grow upwards over contiguous code (blank lines allowed between code lines).
  std::size_t first = pol.first;
  for (std::size_t i = pol.first; i > region.from;) {
    --i;
    const auto b = lines[i].body;
    if (blank(b)) continue;
    if (fence_ticks(b) || !code_like(b)) break;
    first = i;
  }
  // Grow downwards the same way, past the class body.
  std::size_t last = pol.last;
  for (std::size_t i = pol.last + 1; i < region.to; ++i) {
    const auto b = lines[i].body;
    if (blank(b)) continue;
    if (fence_ticks(b) || !code_like(b)) break;
    last = i;
  }

  const std::size_t fence_lines = blocks.empty() ? 0 : 2 * blocks.size();
  if (fence_lines) art.extraction_notes.push_back("removed fence markers");
  std::size_t dropped_before = 0, dropped_after = 0;
  for (std::size_t i = 0; i < first; ++i) dropped_before += !blank(lines[i].body) && !fence_ticks(lines[i].body);
  for (std::size_t i = last + 1; i < lines.size(); ++i) dropped_after += !blank(lines[i].body) && !fence_ticks(lines[i].body);
  if (dropped_before) art.extraction_notes.push_back("dropped " + std::to_string(dropped_before) + " line(s) before the policy");
  if (dropped_after) art.extraction_notes.push_back("dropped " + std::to_string(dropped_after) + " line(s) after the policy");

  const std::size_t begin = lines[first].begin;
  std::size_t end = lines[last].begin + lines[last].body.size();
  if (end < raw.size() && raw[end] == '\r') ++end;
  if (end < raw.size() && raw[end] == '\n') ++end;
  art.extracted_source = std::string(raw.substr(begin, end - begin));
  art.content_hash = content_hash(art.extracted_source);
  return art;
}

}  // namespace aps::codegen
