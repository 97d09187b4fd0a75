#include <string>
#include <vector>

#include "osch/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return osch::cli_run(std::move(args));
}
