#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mspe {

/// Input resolution is below the token grid; embedding would be empty.
class ResolutionTooSmallError : public std::invalid_argument {
public:
    ResolutionTooSmallError(std::size_t h, std::size_t w, std::size_t token_grid)
        : std::invalid_argument("resolution " + std::to_string(h) + "x" + std::to_string(w) +
                                " is below the token grid " + std::to_string(token_grid)),
          height(h), width(w), token_grid(token_grid) {}

    std::size_t height;
    std::size_t width;
    std::size_t token_grid;
};

/// Malformed binary file (checkpoint or IDX). Message names the byte offset.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}

    std::size_t offset;
};

/// Training produced a non-finite loss.
class TrainingFailure : public std::runtime_error {
public:
    TrainingFailure(const std::string& what, std::size_t epoch_index)
        : std::runtime_error(what + " (epoch " + std::to_string(epoch_index) + ")"),
          epoch(epoch_index) {}

    std::size_t epoch;
};

} // namespace mspe
