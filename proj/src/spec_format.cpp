// Architecture spec text format.
//
//   # comment
//   name = RaResNet-50
//
//   [stem]
//   kind = postponed            # resnet | postponed | patchify | cifar
//   out_width = 96
//   patch = 4                   # patchify only
//   stride = 1                  # patchify only
//
//   [stages]
//   depth = 5, 8, 13, 1
//   width = 36, 72, 140, 270
//
//   [block]
//   kind = bottleneck           # basic | bottleneck
//   expansion = 4               # optional: 1 for basic, 4 for bottleneck
//   se_ratio = 4                # optional: absent means no SE
//   act_mask = 1, 1, 1          # optional: all ones
//   norm_mask = 1, 1, 1         # optional: all ones
//
//   [activation]
//   kind = silu                 # relu | gelu | silu | prelu | psilu | pssilu
//
//   [head]
//   num_classes = 1000
//
// Keys are unique within a section; unknown sections and keys are rejected.

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "robarch/archspec.hpp"
#include "robarch/errors.hpp"

namespace robarch {

namespace {

struct Entry {
  std::string value;
  int line = 0;
};

using Section = std::map<std::string, Entry>;

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"", {"name"}},
      {"stem", {"kind", "out_width", "patch", "stride"}},
      {"stages", {"depth", "width"}},
      {"block", {"kind", "expansion", "se_ratio", "act_mask", "norm_mask"}},
      {"activation", {"kind"}},
      {"head", {"num_classes"}},
  };
  return keys;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

int parse_int(const Entry& e, const std::string& key) {
  const std::string_view v = trim(e.value);
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty())
    throw ParseError("'" + key + "' expects an integer, got '" + e.value + "'", e.line);
  return out;
}

std::vector<int> parse_int_list(const Entry& e, const std::string& key) {
  std::vector<int> out;
  std::string_view rest = e.value;
  while (true) {
    const auto comma = rest.find(',');
    Entry item{std::string(trim(rest.substr(0, comma))), e.line};
    out.push_back(parse_int(item, key));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

std::vector<bool> parse_mask(const Entry& e, const std::string& key) {
  std::vector<bool> out;
  for (int v : parse_int_list(e, key)) {
    if (v != 0 && v != 1) throw ParseError("'" + key + "' entries must be 0 or 1", e.line);
    out.push_back(v == 1);
  }
  return out;
}

const Entry& required(const Section& sec, const std::string& section, const std::string& key) {
  const auto it = sec.find(key);
  if (it == sec.end()) throw MissingField(section.empty() ? key : section + "." + key);
  return it->second;
}

const Entry* optional_entry(const Section& sec, const std::string& key) {
  const auto it = sec.find(key);
  return it == sec.end() ? nullptr : &it->second;
}

const Section& required_section(const std::map<std::string, Section>& doc, const std::string& name) {
  const auto it = doc.find(name);
  if (it == doc.end()) throw MissingField(name);
  return it->second;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(static_cast<int>(values[i]));
  }
  return out;
}

}  // namespace

ArchitectureSpec parse_spec(std::string_view text) {
  std::map<std::string, Section> doc;
  doc[""];
  std::string current;
  std::set<std::string> seen_sections;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_no);
      current = std::string(trim(line.substr(1, line.size() - 2)));
      if (!allowed_keys().contains(current) || current.empty())
        throw ParseError("unknown section '" + current + "'", line_no);
      if (!seen_sections.insert(current).second) throw ParseError("duplicate section '" + current + "'", line_no);
      doc[current];
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError("empty key", line_no);
    if (!allowed_keys().at(current).contains(key))
      throw ParseError("unknown key '" + key + "'" + (current.empty() ? "" : " in [" + current + "]"), line_no);
    if (!doc[current].emplace(key, Entry{value, line_no}).second)
      throw ParseError("duplicate key '" + key + "'", line_no);
  }

  ArchitectureSpec spec;
  spec.name = required(doc[""], "", "name").value;

  {
    const Section& sec = required_section(doc, "stem");
    const Entry& kind = required(sec, "stem", "kind");
    const auto k = parse_stem_kind(kind.value);
    if (!k) throw ParseError("unknown stem kind '" + kind.value + "'", kind.line);
    spec.stem.kind = *k;
    spec.stem.out_width = parse_int(required(sec, "stem", "out_width"), "out_width");
    if (*k == StemKind::Patchify) {
      spec.stem.patch = parse_int(required(sec, "stem", "patch"), "patch");
      spec.stem.stride = parse_int(required(sec, "stem", "stride"), "stride");
    } else {
      for (const char* key : {"patch", "stride"})
        if (const Entry* e = optional_entry(sec, key))
          throw ParseError(std::string("'") + key + "' is only valid for patchify stems", e->line);
    }
  }

  {
    const Section& sec = required_section(doc, "stages");
    const Entry& depth_e = required(sec, "stages", "depth");
    const Entry& width_e = required(sec, "stages", "width");
    const auto depths = parse_int_list(depth_e, "depth");
    const auto widths = parse_int_list(width_e, "width");
    if (depths.size() != widths.size())
      throw ParseError("depth and width lists differ in length", width_e.line);
    for (std::size_t i = 0; i < depths.size(); ++i) spec.stages.push_back({depths[i], widths[i]});
  }

  {
    const Section& sec = required_section(doc, "block");
    const Entry& kind = required(sec, "block", "kind");
    const auto k = parse_block_kind(kind.value);
    if (!k) throw ParseError("unknown block kind '" + kind.value + "'", kind.line);
    spec.block.kind = *k;
    const std::size_t convs = static_cast<std::size_t>(spec.block.conv_count());
    const Entry* e = optional_entry(sec, "expansion");
    spec.block.expansion = e ? parse_int(*e, "expansion") : (*k == BlockKind::Basic ? 1 : 4);
    if ((e = optional_entry(sec, "se_ratio"))) spec.block.se_ratio = parse_int(*e, "se_ratio");
    e = optional_entry(sec, "act_mask");
    spec.block.act_mask = e ? parse_mask(*e, "act_mask") : std::vector<bool>(convs, true);
    e = optional_entry(sec, "norm_mask");
    spec.block.norm_mask = e ? parse_mask(*e, "norm_mask") : std::vector<bool>(convs, true);
  }

  {
    const Section& sec = required_section(doc, "activation");
    const Entry& kind = required(sec, "activation", "kind");
    const auto k = parse_activation_kind(kind.value);
    if (!k) throw ParseError("unknown activation kind '" + kind.value + "'", kind.line);
    spec.activation = *k;
  }

  spec.num_classes = parse_int(required(required_section(doc, "head"), "head", "num_classes"), "num_classes");

  require_valid(spec);
  return spec;
}

std::string emit_spec(const ArchitectureSpec& spec) {
  std::ostringstream out;
  out << "name = " << spec.name << "\n\n";

  out << "[stem]\n";
  out << "kind = " << to_string(spec.stem.kind) << "\n";
  out << "out_width = " << spec.stem.out_width << "\n";
  if (spec.stem.kind == StemKind::Patchify) {
    out << "patch = " << spec.stem.patch << "\n";
    out << "stride = " << spec.stem.stride << "\n";
  }

  std::vector<int> depths, widths;
  for (const auto& s : spec.stages) {
    depths.push_back(s.depth);
    widths.push_back(s.width);
  }
  out << "\n[stages]\n";
  out << "depth = " << join(depths) << "\n";
  out << "width = " << join(widths) << "\n";

  out << "\n[block]\n";
  out << "kind = " << to_string(spec.block.kind) << "\n";
  out << "expansion = " << spec.block.expansion << "\n";
  if (spec.block.se_ratio) out << "se_ratio = " << *spec.block.se_ratio << "\n";
  out << "act_mask = " << join(spec.block.act_mask) << "\n";
  out << "norm_mask = " << join(spec.block.norm_mask) << "\n";

  out << "\n[activation]\n";
  out << "kind = " << to_string(spec.activation) << "\n";

  out << "\n[head]\n";
  out << "num_classes = " << spec.num_classes << "\n";
  return out.str();
}

ArchitectureSpec load_spec_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open spec file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_spec(buf.str());
}

void save_spec_file(const ArchitectureSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write spec file '" + path + "'");
  out << emit_spec(spec);
}

}  // namespace robarch
