#include "tldr/cli.hpp"

int main(int argc, char** argv) { return tldr::cli_dispatch(argc, argv); }
