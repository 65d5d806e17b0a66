#include "gqa/prompts.hpp"

// Initial instructions handed to the optimizer. Their text is pinned by
// tests/golden/*.txt.

namespace gqa::programs {

namespace {

const Field kNarrative{"patient_narrative", "The patient's free-text narrative."};
const Field kPatientQuestion{"patient_question", "The question the patient asked."};
const Field kClinicianQuestion{"clinician_question",
                               "The clinician's interpretation of the patient's question."};
const Field kNotes{"clinical_notes",
                   "Clinical note excerpt, one numbered sentence per line as `<id>: <sentence>`."};
const Field kAnswerSentences{
    "answer_sentences",
    "Reference answer, one numbered sentence per line as `answer_sentence_<k>: <sentence>`."};

constexpr const char* kAlignmentFormat =
    "One line per answer sentence, exactly `answer_sentence_k: [note_ids] (confidence=[scores])`, "
    "with one confidence in [0, 1] per note id, e.g. "
    "`answer_sentence_2: [4, 7] (confidence=[0.95, 0.90])`.";

}  // namespace

PromptProgram interpret() {
  PromptProgram p;
  p.name = std::string(kInterpret);
  p.instruction = R"(Transform a patient's narrative into a concise clinical question (≤15 words) that a clinician would need to answer by reviewing the patient's medical record.

Core Constraints:
1. ≤15 words, strictly enforced.
2. Patient-specific: use "him/her/the patient" — never generic.
3. Preserve medical terms: use exact procedure/medication names from the narrative.
4. Must end with a question mark.

High-Scoring Patterns:
Patient's concern | Target pattern
"Why did they do X?" | "Why was [X] recommended to him/her?"
"Will I recover?" | "What is the expected course of recovery for him/her?"
"Why X instead of Y?" | "Why was [X] recommended over [Y]?"
"Why was I given medication?" | "Why was he/she given [medication]?"
"Is this related to...?" | "Are his/her [symptoms] related to [condition]?"

Input: Patient narrative.
Output: Concise clinician question (≤15 words).)";
  p.input_fields = {kNarrative, kPatientQuestion};
  p.output_fields = {{"clinician_question", "Concise clinician question (≤15 words) ending with '?'."}};
  p.chain_of_thought = true;
  return p;
}

PromptProgram essential_reasoning() {
  PromptProgram p;
  p.name = std::string(kEssentialReasoning);
  p.instruction =
      "Given a patient narrative, patient question, clinician question, and a clinical note "
      "sentence, provide reasoning for why this note sentence is essential to address the "
      "question.";
  p.input_fields = {kNarrative, kPatientQuestion, kClinicianQuestion,
                    {"note_sentence", "The clinical note sentence under consideration."}};
  p.output_fields = {{"reasoning", "One or two sentences of reasoning."}};
  return p;
}

PromptProgram non_essential_reasoning() {
  PromptProgram p = essential_reasoning();
  p.name = std::string(kNonEssentialReasoning);
  p.instruction =
      "Given the same inputs, provide reasoning for why this note sentence is not essential to "
      "address the question.";
  return p;
}

PromptProgram classify() {
  PromptProgram p;
  p.name = std::string(kClassify);
  p.instruction = R"(You are a medical assistant.
1. You are provided with a patient narrative, patient question, and clinician question.
2. You are provided with the clinical notes related to the case.

Classify each clinical note sentence as either essential or irrelevant in addressing the patient question and clinician question. Provide a relevancy score (0–10) and reasoning for each.

Be very critical when assigning the essential tag. Only assign it if the note sentence is directly relevant to the specific question asked.

First-Order Relevance Only: A note is essential only if it directly answers or provides evidence for the question. Background context or treatment summaries are not essential.

Input: Patient narrative, patient question, clinician question, clinical notes.
Output per note: <id>: <sentence> -> essential|irrelevant -> <score> -> <reasoning>)";
  p.input_fields = {kNarrative, kPatientQuestion, kClinicianQuestion, kNotes};
  p.output_fields = {
      {"verdicts",
       "One line per note sentence, exactly `<id>: <sentence> -> essential|irrelevant -> <score> "
       "-> <reasoning>` with an integer score from 0 to 10."}};
  return p;
}

PromptProgram answer() {
  PromptProgram p;
  p.name = std::string(kAnswer);
  p.instruction = R"(You are a medical assistant answering a patient's question using only information from the clinical note excerpt.

Constraints:
1. Answer must be at most 75 words (~5 sentences).
2. Use only facts stated in the clinical note. Do not add outside medical knowledge, generic advice, or speculation.
3. Write in professional clinical register (not simplified lay language).
4. Do not include citation markers such as [1], [2].
5. Reuse exact clinical wording and terminology from note sentences as much as possible.
6. The last sentence must directly answer the patient's question.

Input: Patient narrative, patient question, clinician question, clinical note excerpt.
Output: Concise grounded answer (≤75 words).)";
  p.input_fields = {kNarrative, kPatientQuestion, kClinicianQuestion, kNotes,
                    {"essential_sentences",
                     "The note sentences identified as essential evidence, as `<id>: <sentence>`."}};
  p.output_fields = {{"answer", "Concise grounded answer (≤75 words) without citation markers."}};
  return p;
}

PromptProgram consolidate() {
  PromptProgram p;
  p.name = std::string(kConsolidate);
  p.instruction = R"(You are a clinical answer consolidation system. Given a patient question and 5 candidate answers generated from a clinical note:
1. Retain only claims consistently supported across the candidate answers.
2. Ground strictly in clinical note content—do not add external knowledge or speculate.
3. Use professional medical register.
4. Limit to 75 words (~5 sentences).
5. Do not include patient names or identifying information.

Output only the final consolidated answer.)";
  p.input_fields = {kPatientQuestion, kNotes,
                    {"candidate_answers", "Candidate answers, one per line as `candidate_<k>: <text>`."}};
  p.output_fields = {{"answer", "The final consolidated answer (≤75 words)."}};
  return p;
}

PromptProgram align() {
  PromptProgram p;
  p.name = std::string(kAlign);
  p.instruction = R"(You are a medical evidence alignment specialist. Align each answer sentence to the specific clinical note sentence(s) that directly support it.

Alignment Rules:
1. Align only when the answer sentence directly paraphrases, summarizes, or references information explicitly stated in the note sentence.
2. Do not align based on indirect associations, background context, or inferential connections.
3. Over-citing (unnecessary links) and under-citing (missing links) are both penalized.
4. Each answer sentence must be attributed to at least one note sentence. If no direct support exists, choose the closest note sentence and assign a low confidence (0.10–0.30).

Input: Patient narrative, patient question, clinician question, clinical note sentences, answer sentences.
Output per answer sentence:
answer_sentence_k: [note_ids] (confidence=[scores]))";
  p.input_fields = {kNarrative, kPatientQuestion, kClinicianQuestion, kNotes, kAnswerSentences};
  p.output_fields = {{"alignment", kAlignmentFormat}};
  return p;
}

PromptProgram reflect() {
  PromptProgram p;
  p.name = std::string(kReflect);
  p.instruction = R"(You are a strict reviewer performing self-reflection on an evidence alignment task. Critically review the initial alignment and identify:
1. False positives (primary focus): links where the answer does not directly use information from the linked note sentence. Remove these.
2. False negatives (secondary focus): missing links where an answer sentence clearly paraphrases or references a note sentence. Add only when direct and explicit.

Produce a corrected alignment with updated confidence scores.

Additional input: Initial alignment from Stage A.)";
  p.input_fields = {kNarrative, kPatientQuestion, kClinicianQuestion, kNotes, kAnswerSentences,
                    {"initial_alignment", "Initial alignment from Stage A."}};
  p.output_fields = {{"alignment", kAlignmentFormat}};
  return p;
}

PromptProgram verify() {
  PromptProgram p;
  p.name = std::string(kVerify);
  p.instruction = R"(You are a verification specialist. For each alignment link (answer sentence k → note sentence i), verify:
1. Does answer sentence k directly paraphrase or reference specific information from note sentence i?
2. If note sentence i were removed, would answer sentence k lose a specific piece of evidence it relies on?
3. Is the connection direct (not through inference or intermediate reasoning)?

If any check fails, remove the link. Return the final verified alignment.

Additional input: Reflected alignment from Stage B.)";
  p.input_fields = {kNarrative, kPatientQuestion, kClinicianQuestion, kNotes, kAnswerSentences,
                    {"reflected_alignment", "Reflected alignment from Stage B."}};
  p.output_fields = {{"alignment", kAlignmentFormat}};
  return p;
}

std::map<std::string, PromptProgram> defaults() {
  std::map<std::string, PromptProgram> out;
  for (auto p : {interpret(), essential_reasoning(), non_essential_reasoning(), classify(), answer(),
                 consolidate(), align(), reflect(), verify()}) {
    out.emplace(p.name, std::move(p));
  }
  return out;
}

}  // namespace gqa::programs
