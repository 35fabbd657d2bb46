#include "xsdep/parallel.hpp"

#include <cstdlib>
#include <string>

namespace xsdep {

int default_thread_count() {
    if (const char* env = std::getenv("XSDEP_THREADS")) {
        try {
            const int value = std::stoi(env);
            if (value > 0) return value;
        } catch (...) {
        }
    }
    return 1;
}

}  // namespace xsdep
