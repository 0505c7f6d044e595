#include <vector>
#include <string>

#include "covnet/cli.hpp"

int main(int argc, char** argv) {
    return covnet::run_command(std::vector<std::string>(argv + 1, argv + argc));
}
