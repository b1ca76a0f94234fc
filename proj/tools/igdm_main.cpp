#include <string>
#include <vector>

#include "igdm/runner.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return igdm::run_command(args);
}
