#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pis {

// Base of every error thrown by the library. The CLI maps all of these to
// exit code 2 (data error).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class EmptySentence : public Error {
public:
    EmptySentence() : Error("sentence has no word tokens") {}
    using Error::Error;
};

class SubsequenceViolation : public Error {
public:
    using Error::Error;
};

class ZeroVector : public Error {
public:
    ZeroVector() : Error("cosine similarity of a zero-norm vector") {}
};

class EmptyBuffer : public Error {
public:
    EmptyBuffer() : Error("cannot sample from an empty replay buffer") {}
};

class EmptyLexicon : public Error {
public:
    EmptyLexicon() : Error("noise lexicon is empty") {}
};

class MissingPolicy : public Error {
public:
    MissingPolicy() : Error("policy target mode requires a loaded model") {}
};

class NoReferences : public Error {
public:
    NoReferences() : Error("no document carries a reference or answer") {}
};

// Line-oriented parse failure. line_no is 1-based; 0 means "not line based".
class ParseError : public Error {
public:
    ParseError(std::size_t line_no, const std::string& what)
        : Error(line_no == 0 ? "parse error: " + what
                             : "parse error at line " + std::to_string(line_no) + ": " + what),
          line_no_(line_no) {}
    std::size_t line_no() const noexcept { return line_no_; }

private:
    std::size_t line_no_;
};

class SchemaError : public Error {
public:
    SchemaError(std::size_t line_no, std::string field, const std::string& what)
        : Error("schema error at line " + std::to_string(line_no) + ", field '" + field + "': " + what),
          line_no_(line_no),
          field_(std::move(field)) {}
    std::size_t line_no() const noexcept { return line_no_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t line_no_;
    std::string field_;
};

class MissingField : public Error {
public:
    MissingField(std::size_t line_no, std::string field)
        : Error("line " + std::to_string(line_no) + " is missing field '" + field + "'"),
          line_no_(line_no),
          field_(std::move(field)) {}
    std::size_t line_no() const noexcept { return line_no_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t line_no_;
    std::string field_;
};

class NormalizationError : public Error {
public:
    NormalizationError(std::size_t line_no, double sum)
        : Error("attention_mean at line " + std::to_string(line_no) + " sums to " + std::to_string(sum)),
          sum_(sum) {}
    double sum() const noexcept { return sum_; }

private:
    double sum_;
};

class DuplicateKey : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    explicit AlignmentError(std::size_t index)
        : Error("encoder record misaligned at word token " + std::to_string(index)), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class MissingRecord : public Error {
public:
    using Error::Error;
};

class VersionMismatch : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

}  // namespace pis
