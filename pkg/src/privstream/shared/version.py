privstream_commit = 'unknown'
