// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace echomoe::textpipe {

enum class TemplateClass { Open, Closed };

std::string to_string(TemplateClass c);
/// "open" or "closed"; anything else is a DataError.
TemplateClass parse_template_class(const std::string& text);

struct InstructionRecord {
  std::string id;
  std::string question;
  std::string answer;
  TemplateClass template_class = TemplateClass::Open;
  std::string modality;
  std::string source;
};

void to_json(nlohmann::json& j, const InstructionRecord& r);
void from_json(const nlohmann::json& j, InstructionRecord& r);

/// One JSON object per line; blank lines are skipped. Malformed lines and
/// records whose question or answer normalise to nothing raise DataError
/// naming the 1-based line number.
std::vector<InstructionRecord> read_records(std::istream& in);
void write_records(std::ostream& out, const std::vector<InstructionRecord>& records);

/// A question/answer pattern handed to an instruction generator.
struct QuestionTemplate {
  std::string id;
  TemplateClass template_class = TemplateClass::Open;
  std::string modality;
  std::string question;
  std::string answer;
};

/// Boundary to the model that writes instruction data from templates.
class InstructionGenerator {
 public:
  virtual ~InstructionGenerator() = default;
  virtual InstructionRecord generate(const QuestionTemplate& tmpl, std::size_t index) = 0;
};

/// Returns the template text unchanged, tagged with its class and modality.
class EchoGenerator : public InstructionGenerator {
 public:
  InstructionRecord generate(const QuestionTemplate& tmpl, std::size_t index) override;
};

}  // namespace echomoe::textpipe
