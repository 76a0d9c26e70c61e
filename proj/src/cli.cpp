namespace loopren {}
