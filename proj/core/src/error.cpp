#include "emopipe/error.hpp"

namespace emopipe {

DegenerateChannelError::DegenerateChannelError(int subject, std::size_t channel,
                                               const std::string& why)
    : Error("degenerate channel: subject " + std::to_string(subject) + ", channel ch" +
            std::to_string(channel + 1) + ": " + why),
      subject_(subject),
      channel_(channel) {}

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : Error(source + ":" + std::to_string(line) + ": " + what), source_(source), line_(line) {}

MissingPrerequisiteError::MissingPrerequisiteError(const std::string& file,
                                                   const std::string& producer)
    : Error("missing input '" + file + "' (produced by stage '" + producer + "')"),
      file_(file),
      producer_(producer) {}

}  // namespace emopipe
