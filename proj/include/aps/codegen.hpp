#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "aps/error.hpp"
#include "aps/params.hpp"

namespace aps::codegen {

enum class TemplateKind { Generation, Repair, Meta };

/// Embedded template text with {placeholder} sites.
const std::string& template_text(TemplateKind kind);
/// The Python class skeleton candidates must follow (no trailing newline).
const std::string& policy_signature();

enum class Mode { Explore, Refine };
const char* to_string(Mode m);
const std::string& explore_or_refine_instruction(Mode m);
const std::string& task_mode_text(Mode m);

class UnboundPlaceholder : public Error {
 public:
  explicit UnboundPlaceholder(std::string name)
      : Error("unbound placeholder {" + name + "}"), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

/// Names of the {identifier} sites in order of appearance (duplicates kept).
std::vector<std::string> placeholders(std::string_view tpl);

/// Single pass: substituted values are never rescanned. A missing or empty value for any
/// site throws UnboundPlaceholder.
std::string render(std::string_view tpl, const std::map<std::string, std::string>& values);

/// Backtick fence long enough to wrap `code`: three, or one more than its longest run.
std::string fence_for(std::string_view code);

std::string build_generation_prompt(const std::string& task_description, const std::string& signature,
                                    const SystemParams& params);
std::string build_repair_prompt(const std::string& error_message, const std::string& failed_code,
                                const std::string& signature);

struct CandidateArtifact {
  std::string raw_output;
  std::string extracted_source;
  std::vector<std::string> extraction_notes;
  std::uint64_t content_hash = 0;

  std::string hash_hex() const;
};

class ExtractionError : public Error {
 public:
  using Error::Error;
};
class NoPolicyFound : public ExtractionError {
 public:
  using ExtractionError::ExtractionError;
};
class MultiplePolicies : public ExtractionError {
 public:
  using ExtractionError::ExtractionError;
};

/// Pulls the single policy class (a top-level class defining take_action) out of model
/// output, together with the contiguous code right before it (imports, helpers).
CandidateArtifact extract_policy(std::string_view raw);

std::uint64_t content_hash(std::string_view source);

}  // namespace aps::codegen
