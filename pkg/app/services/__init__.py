# Services: one class per concern, plus the helpers they share
