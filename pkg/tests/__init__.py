# Tests package
