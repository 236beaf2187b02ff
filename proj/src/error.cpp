#include "district/error.hpp"

namespace district {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::parse: return "parse error";
        case ErrorKind::encoding: return "encoding error";
        case ErrorKind::schema: return "schema error";
        case ErrorKind::precondition: return "precondition violation";
        case ErrorKind::split: return "split error";
        case ErrorKind::retrieval: return "retrieval error";
        case ErrorKind::contract: return "contract error";
        case ErrorKind::alignment: return "alignment error";
        case ErrorKind::config: return "config error";
        case ErrorKind::transport: return "transport error";
        case ErrorKind::protocol: return "protocol error";
        case ErrorKind::io: return "io error";
    }
    return "error";
}

}  // namespace district
