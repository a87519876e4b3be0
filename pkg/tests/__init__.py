# Test package marker