#include "lantern/cli.hpp"

int main(int argc, char** argv) { return lantern::dispatch(argc, argv); }
